#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace evmst {

/// Error raised for violated preconditions, malformed inputs and io failures.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& what) { throw Error(what); }

inline void require(bool cond, const std::string& what) {
    if (!cond) fail(what);
}

/// Splits [0, n) into contiguous chunks and runs fn(begin, end) per chunk,
/// one worker thread each. jobs <= 1 runs fn(0, n) inline. Bodies must write
/// disjoint state; results do not depend on the job count.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    if (jobs <= 1 || n <= 1) {
        if (n > 0) fn(std::size_t{0}, n);
        return;
    }
    std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t begin = w * chunk;
        std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([begin, end, &fn] { fn(begin, end); });
    }
    for (auto& t : pool) t.join();
}

// --- little-endian binary io -------------------------------------------------

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    write_u32(os, static_cast<std::uint32_t>(v & 0xffffffffu));
    write_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline void write_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
}

inline std::uint32_t read_u32(std::istream& is, const std::string& what = "u32") {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) fail("unexpected end of file while reading " + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t read_u64(std::istream& is, const std::string& what = "u64") {
    std::uint64_t lo = read_u32(is, what);
    std::uint64_t hi = read_u32(is, what);
    return lo | (hi << 32);
}

inline float read_f32(std::istream& is, const std::string& what = "f32") {
    std::uint32_t bits = read_u32(is, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline void write_magic(std::ostream& os, const char magic[5]) { os.write(magic, 4); }

inline void expect_magic(std::istream& is, const char magic[5], const std::string& what) {
    char got[4];
    is.read(got, 4);
    if (!is || std::memcmp(got, magic, 4) != 0) fail("bad magic, not a " + what + " file");
}

// --- rng helpers -------------------------------------------------------------

using Rng = std::mt19937_64;

/// Normal(0, std) resampled until |x| <= 2*std. Used for weight init.
inline double truncated_normal(Rng& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (;;) {
        double x = dist(rng);
        if (std::abs(x) <= 2.0 * stddev) return x;
    }
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("cannot open file: " + path);
    is.seekg(0, std::ios::end);
    std::streamoff len = is.tellg();
    is.seekg(0, std::ios::beg);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(len));
    if (len > 0) is.read(reinterpret_cast<char*>(bytes.data()), len);
    if (!is) fail("short read: " + path);
    return bytes;
}

inline void write_file_bytes(const std::string& path, const void* data, std::size_t len) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail("cannot create file: " + path);
    os.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    if (!os) fail("short write: " + path);
}

}  // namespace evmst
