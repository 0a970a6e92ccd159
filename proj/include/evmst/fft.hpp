#pragma once

#include <complex>
#include <numbers>
#include <vector>

#include "evmst/common.hpp"

namespace evmst {

using cplx = std::complex<double>;

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

/// In-place iterative Cooley-Tukey, n a power of two. No normalization.
inline void fft_pow2(std::vector<cplx>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n <= 1) return;
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        cplx wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                cplx u = a[i + k];
                cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

}  // namespace detail

/// Reusable length-N DFT. Powers of two go through radix-2 directly, other
/// lengths through Bluestein's chirp-z resampling onto a padded power of two.
/// forward() computes X_k = sum_t x_t e^{-2*pi*i*k*t/N}; inverse() divides by N.
class FftPlan {
public:
    explicit FftPlan(std::size_t n) : n_(n) {
        require(n >= 1, "fft length must be >= 1");
        if (detail::is_pow2(n_)) return;
        m_ = detail::next_pow2(2 * n_ - 1);
        chirp_.resize(n_);
        bfft_.assign(m_, cplx(0.0, 0.0));
        // k^2 mod 2n keeps the chirp argument exact for large k
        for (std::size_t k = 0; k < n_; ++k) {
            std::size_t k2 = (k * k) % (2 * n_);
            double ang = std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n_);
            chirp_[k] = cplx(std::cos(ang), -std::sin(ang));
        }
        bfft_[0] = std::conj(chirp_[0]);
        for (std::size_t k = 1; k < n_; ++k) {
            bfft_[k] = std::conj(chirp_[k]);
            bfft_[m_ - k] = std::conj(chirp_[k]);
        }
        detail::fft_pow2(bfft_, false);
    }

    std::size_t size() const { return n_; }

    void forward(std::vector<cplx>& a) const {
        require(a.size() == n_, "fft input length mismatch");
        if (m_ == 0) {
            detail::fft_pow2(a, false);
            return;
        }
        std::vector<cplx> tmp(m_, cplx(0.0, 0.0));
        for (std::size_t k = 0; k < n_; ++k) tmp[k] = a[k] * chirp_[k];
        detail::fft_pow2(tmp, false);
        for (std::size_t k = 0; k < m_; ++k) tmp[k] *= bfft_[k];
        detail::fft_pow2(tmp, true);
        const double scale = 1.0 / static_cast<double>(m_);
        for (std::size_t k = 0; k < n_; ++k) a[k] = tmp[k] * scale * chirp_[k];
    }

    void inverse(std::vector<cplx>& a) const {
        require(a.size() == n_, "fft input length mismatch");
        for (auto& v : a) v = std::conj(v);
        forward(a);
        const double scale = 1.0 / static_cast<double>(n_);
        for (auto& v : a) v = std::conj(v) * scale;
    }

private:
    std::size_t n_;
    std::size_t m_ = 0;  // 0 when n_ is a power of two
    std::vector<cplx> chirp_;
    std::vector<cplx> bfft_;
};

inline std::vector<cplx> dft(const std::vector<double>& x) {
    std::vector<cplx> a(x.begin(), x.end());
    FftPlan(a.size()).forward(a);
    return a;
}

/// Amplitude of the sinusoidal component at `hz` in a real signal
/// (2|X_k|/N at the nearest bin).
inline double tone_amplitude(const std::vector<double>& x, double fps, double hz) {
    auto spec = dft(x);
    const std::size_t n = x.size();
    auto k = static_cast<std::size_t>(std::llround(hz * static_cast<double>(n) / fps));
    require(k > 0 && k < n / 2 + 1, "probe frequency outside spectrum");
    return 2.0 * std::abs(spec[k]) / static_cast<double>(n);
}

}  // namespace evmst
