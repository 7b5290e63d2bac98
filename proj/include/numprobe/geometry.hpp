// 2D geometry for stimulus scenes: shape primitives, point-inside tests,
// bounding extents, boundary sampling, and convex hull area.
#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "numprobe/common.hpp"

namespace numprobe {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

enum class ShapeKind : std::uint8_t { Circle = 0, Square = 1, Triangle = 2, Ellipse = 3, Rectangle = 4 };

inline constexpr int kShapeKindCount = 5;

// One placed object. `size` is the circumradius: every boundary point lies
// within `size` of `center`, for any shape. `aspect` is the long/short axis
// ratio (ellipse, rectangle); `orientation` is the rotation in radians.
struct SceneObject {
    ShapeKind shape = ShapeKind::Circle;
    Vec2 center;
    double size = 0.0;
    double aspect = 1.0;
    double orientation = 0.0;
};

namespace detail {

inline Vec2 rotate(Vec2 p, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * p.x - s * p.y, s * p.x + c * p.y};
}

// Half-extents of the rectangle with circumradius R and aspect ratio a:
// half-diagonal R split so that width/height = a.
inline void rect_half_sides(double size, double aspect, double& hw, double& hh) {
    const double d = std::sqrt(1.0 + aspect * aspect);
    hw = size * aspect / d;
    hh = size / d;
}

}  // namespace detail

// Polygon vertices for the polygonal shapes (empty for circle/ellipse).
inline std::vector<Vec2> polygon_vertices(const SceneObject& o) {
    std::vector<Vec2> v;
    switch (o.shape) {
        case ShapeKind::Square: {
            for (int k = 0; k < 4; ++k) {
                const double a = o.orientation + 0.25 * 3.14159265358979323846 * (1 + 2 * k);
                v.push_back(o.center + Vec2{o.size * std::cos(a), o.size * std::sin(a)});
            }
            break;
        }
        case ShapeKind::Triangle: {
            for (int k = 0; k < 3; ++k) {
                const double a = o.orientation + 2.0 * 3.14159265358979323846 * k / 3.0;
                v.push_back(o.center + Vec2{o.size * std::cos(a), o.size * std::sin(a)});
            }
            break;
        }
        case ShapeKind::Rectangle: {
            double hw, hh;
            detail::rect_half_sides(o.size, o.aspect, hw, hh);
            const std::array<Vec2, 4> corners = {Vec2{hw, hh}, Vec2{-hw, hh}, Vec2{-hw, -hh}, Vec2{hw, -hh}};
            for (Vec2 c : corners) v.push_back(o.center + detail::rotate(c, o.orientation));
            break;
        }
        default:
            break;
    }
    return v;
}

// Boundary sample points used for convex-hull computations. Curved shapes are
// approximated by a 32-gon, well inside the 5% hull-area tolerance.
inline void append_boundary_points(const SceneObject& o, std::vector<Vec2>& out) {
    constexpr int kArcSamples = 32;
    switch (o.shape) {
        case ShapeKind::Circle: {
            for (int k = 0; k < kArcSamples; ++k) {
                const double a = 2.0 * 3.14159265358979323846 * k / kArcSamples;
                out.push_back(o.center + Vec2{o.size * std::cos(a), o.size * std::sin(a)});
            }
            break;
        }
        case ShapeKind::Ellipse: {
            const double b = o.size / o.aspect;
            for (int k = 0; k < kArcSamples; ++k) {
                const double a = 2.0 * 3.14159265358979323846 * k / kArcSamples;
                out.push_back(o.center + detail::rotate({o.size * std::cos(a), b * std::sin(a)}, o.orientation));
            }
            break;
        }
        default: {
            auto v = polygon_vertices(o);
            out.insert(out.end(), v.begin(), v.end());
        }
    }
}

// Axis-aligned bounds, exact for every shape (analytic for rotated ellipses).
inline void object_aabb(const SceneObject& o, Vec2& lo, Vec2& hi) {
    switch (o.shape) {
        case ShapeKind::Circle:
            lo = o.center - Vec2{o.size, o.size};
            hi = o.center + Vec2{o.size, o.size};
            break;
        case ShapeKind::Ellipse: {
            const double a = o.size, b = o.size / o.aspect;
            const double c = std::cos(o.orientation), s = std::sin(o.orientation);
            const double ex = std::sqrt(a * a * c * c + b * b * s * s);
            const double ey = std::sqrt(a * a * s * s + b * b * c * c);
            lo = o.center - Vec2{ex, ey};
            hi = o.center + Vec2{ex, ey};
            break;
        }
        default: {
            lo = {1e30, 1e30};
            hi = {-1e30, -1e30};
            for (Vec2 p : polygon_vertices(o)) {
                lo.x = std::min(lo.x, p.x);
                lo.y = std::min(lo.y, p.y);
                hi.x = std::max(hi.x, p.x);
                hi.y = std::max(hi.y, p.y);
            }
        }
    }
}

inline bool point_in_object(const SceneObject& o, Vec2 p) {
    const Vec2 d = p - o.center;
    switch (o.shape) {
        case ShapeKind::Circle:
            return dot(d, d) <= o.size * o.size;
        case ShapeKind::Ellipse: {
            const Vec2 local = detail::rotate(d, -o.orientation);
            const double a = o.size, b = o.size / o.aspect;
            const double u = local.x / a, v = local.y / b;
            return u * u + v * v <= 1.0;
        }
        case ShapeKind::Rectangle: {
            const Vec2 local = detail::rotate(d, -o.orientation);
            double hw, hh;
            detail::rect_half_sides(o.size, o.aspect, hw, hh);
            return std::abs(local.x) <= hw && std::abs(local.y) <= hh;
        }
        default: {
            // Convex polygon: inside iff on the left of every CCW edge.
            auto v = polygon_vertices(o);
            for (std::size_t i = 0; i < v.size(); ++i) {
                const Vec2 e = v[(i + 1) % v.size()] - v[i];
                if (cross(e, p - v[i]) < 0.0) return false;
            }
            return true;
        }
    }
}

// Exact area of the object footprint.
inline double object_area(const SceneObject& o) {
    constexpr double kPi = 3.14159265358979323846;
    switch (o.shape) {
        case ShapeKind::Circle:
            return kPi * o.size * o.size;
        case ShapeKind::Square:
            return 2.0 * o.size * o.size;
        case ShapeKind::Triangle:
            return 0.75 * std::sqrt(3.0) * o.size * o.size;
        case ShapeKind::Ellipse:
            return kPi * o.size * o.size / o.aspect;
        case ShapeKind::Rectangle: {
            double hw, hh;
            detail::rect_half_sides(o.size, o.aspect, hw, hh);
            return 4.0 * hw * hh;
        }
    }
    return 0.0;
}

// Andrew monotone chain. Returns hull vertices in CCW order; collinear and
// duplicate points are dropped.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
    std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    pts.erase(std::unique(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }),
              pts.end());
    const std::size_t n = pts.size();
    if (n < 3) return pts;
    std::vector<Vec2> hull(2 * n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    const std::size_t lower = k + 1;
    for (std::size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

// Area of the convex hull of a point set (shoelace over the hull polygon).
// Degenerate inputs (fewer than 3 distinct points, or all collinear) give 0.
inline double convex_hull_area(const std::vector<Vec2>& points) {
    if (points.empty()) throw DomainError("convex_hull_area: need at least one point");
    const std::vector<Vec2> hull = convex_hull(points);
    if (hull.size() < 3) return 0.0;
    double twice = 0.0;
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const Vec2 a = hull[i];
        const Vec2 b = hull[(i + 1) % hull.size()];
        twice += cross(a, b);
    }
    return 0.5 * std::abs(twice);
}

}  // namespace numprobe
