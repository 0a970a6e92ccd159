#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "evmst/common.hpp"

namespace evmst {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

using Polygon = std::vector<Point>;

inline constexpr int kLandmarkCount = 68;
inline constexpr int kRoiCols = 5;
inline constexpr int kRoiRows = 3;
inline constexpr int kRoiCount = kRoiCols * kRoiRows;

using Landmarks = std::array<Point, kLandmarkCount>;

namespace geom {

inline double cross(const Point& o, const Point& a, const Point& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

/// Monotone-chain convex hull; output has no interior or duplicate points.
inline Polygon convex_hull(std::vector<Point> pts) {
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Point& a, const Point& b) { return a.x == b.x && a.y == b.y; }),
              pts.end());
    const std::size_t n = pts.size();
    if (n < 3) return pts;
    Polygon hull(2 * n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    for (std::size_t i = n - 1, lower = k + 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

inline double area(const Polygon& poly) {
    double acc = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point& a = poly[i];
        const Point& b = poly[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    return 0.5 * std::abs(acc);
}

/// Sutherland-Hodgman step: keep the side where inside(p) holds.
template <typename InsideFn, typename LerpFn>
Polygon clip_half_plane(const Polygon& poly, InsideFn inside, LerpFn intersect) {
    Polygon out;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point& cur = poly[i];
        const Point& nxt = poly[(i + 1) % n];
        bool cin = inside(cur);
        bool nin = inside(nxt);
        if (cin) {
            out.push_back(cur);
            if (!nin) out.push_back(intersect(cur, nxt));
        } else if (nin) {
            out.push_back(intersect(cur, nxt));
        }
    }
    return out;
}

inline Polygon clip_below(const Polygon& poly, double y_min) {
    return clip_half_plane(
        poly, [y_min](const Point& p) { return p.y >= y_min; },
        [y_min](const Point& a, const Point& b) {
            double t = (y_min - a.y) / (b.y - a.y);
            return Point{a.x + t * (b.x - a.x), y_min};
        });
}

inline Polygon clip_rect(Polygon poly, double x0, double y0, double x1, double y1) {
    poly = clip_half_plane(
        poly, [x0](const Point& p) { return p.x >= x0; },
        [x0](const Point& a, const Point& b) {
            double t = (x0 - a.x) / (b.x - a.x);
            return Point{x0, a.y + t * (b.y - a.y)};
        });
    poly = clip_half_plane(
        poly, [x1](const Point& p) { return p.x <= x1; },
        [x1](const Point& a, const Point& b) {
            double t = (x1 - a.x) / (b.x - a.x);
            return Point{x1, a.y + t * (b.y - a.y)};
        });
    poly = clip_half_plane(
        poly, [y0](const Point& p) { return p.y >= y0; },
        [y0](const Point& a, const Point& b) {
            double t = (y0 - a.y) / (b.y - a.y);
            return Point{a.x + t * (b.x - a.x), y0};
        });
    poly = clip_half_plane(
        poly, [y1](const Point& p) { return p.y <= y1; },
        [y1](const Point& a, const Point& b) {
            double t = (y1 - a.y) / (b.y - a.y);
            return Point{a.x + t * (b.x - a.x), y1};
        });
    return poly;
}

/// Inclusive containment test for a convex polygon of consistent winding.
inline bool contains(const Polygon& poly, const Point& p) {
    const std::size_t n = poly.size();
    if (n < 3) return false;
    bool any_pos = false, any_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
        double c = cross(poly[i], poly[(i + 1) % n], p);
        if (c > 0.0) any_pos = true;
        if (c < 0.0) any_neg = true;
        if (any_pos && any_neg) return false;
    }
    return true;
}

}  // namespace geom

/// The 15 facial regions of one frame: the convex hull of jawline (0-16) and
/// eyebrow (17-26) landmarks, clipped to at-or-below the lower eyebrow line
/// (forehead excluded), split by a 5-column x 3-row grid over the clipped
/// hull's bounding box. Region k = row*5+col, raster order.
struct RoiLayout {
    std::array<Polygon, kRoiCount> regions;
    Polygon clipped_hull;
    double brow_y = 0.0;
    double box_x0 = 0.0, box_y0 = 0.0, box_x1 = 0.0, box_y1 = 0.0;
};

inline RoiLayout roi_layout(const Landmarks& pts) {
    std::vector<Point> face(pts.begin(), pts.begin() + 27);  // jaw + eyebrows
    Polygon hull = geom::convex_hull(face);
    require(hull.size() >= 3 && geom::area(hull) > 0.0,
            "degenerate landmark hull (collinear points)");

    double brow_y = pts[17].y;
    for (int i = 18; i <= 26; ++i) brow_y = std::max(brow_y, pts[i].y);

    RoiLayout layout;
    layout.brow_y = brow_y;
    layout.clipped_hull = geom::clip_below(hull, brow_y);
    require(layout.clipped_hull.size() >= 3 && geom::area(layout.clipped_hull) > 0.0,
            "degenerate facial area below the eyebrow line");

    double x0 = layout.clipped_hull[0].x, x1 = x0;
    double y0 = layout.clipped_hull[0].y, y1 = y0;
    for (const Point& p : layout.clipped_hull) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    layout.box_x0 = x0;
    layout.box_y0 = y0;
    layout.box_x1 = x1;
    layout.box_y1 = y1;

    const double cw = (x1 - x0) / kRoiCols;
    const double ch = (y1 - y0) / kRoiRows;
    for (int row = 0; row < kRoiRows; ++row) {
        for (int col = 0; col < kRoiCols; ++col) {
            double cx0 = x0 + cw * col;
            double cx1 = col + 1 == kRoiCols ? x1 : x0 + cw * (col + 1);
            double cy0 = y0 + ch * row;
            double cy1 = row + 1 == kRoiRows ? y1 : y0 + ch * (row + 1);
            layout.regions[row * kRoiCols + col] =
                geom::clip_rect(layout.clipped_hull, cx0, cy0, cx1, cy1);
        }
    }
    return layout;
}

/// Rasterizes the layout: pixel centers inside the clipped hull, assigned to
/// the unique grid cell containing them (right/bottom bbox edges fold into the
/// last cell). Cells are half-open, so regions never share a pixel.
inline std::array<std::vector<std::pair<int, int>>, kRoiCount> roi_pixels(const RoiLayout& layout,
                                                                          int width, int height) {
    std::array<std::vector<std::pair<int, int>>, kRoiCount> out;
    const double bw = layout.box_x1 - layout.box_x0;
    const double bh = layout.box_y1 - layout.box_y0;
    int px0 = std::max(0, static_cast<int>(std::floor(layout.box_x0 - 0.5)));
    int px1 = std::min(width - 1, static_cast<int>(std::ceil(layout.box_x1)));
    int py0 = std::max(0, static_cast<int>(std::floor(layout.box_y0 - 0.5)));
    int py1 = std::min(height - 1, static_cast<int>(std::ceil(layout.box_y1)));
    for (int y = py0; y <= py1; ++y) {
        for (int x = px0; x <= px1; ++x) {
            Point c{x + 0.5, y + 0.5};
            if (!geom::contains(layout.clipped_hull, c)) continue;
            int col = static_cast<int>(std::floor((c.x - layout.box_x0) * kRoiCols / bw));
            int row = static_cast<int>(std::floor((c.y - layout.box_y0) * kRoiRows / bh));
            col = std::clamp(col, 0, kRoiCols - 1);
            row = std::clamp(row, 0, kRoiRows - 1);
            out[row * kRoiCols + col].emplace_back(x, y);
        }
    }
    return out;
}

}  // namespace evmst
