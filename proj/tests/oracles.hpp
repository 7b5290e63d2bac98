// Test-only oracles: independent reference computations that the unit and
// acceptance suites check the implementations against. Nothing here may call
// into the implementation paths being verified.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "numprobe/geometry.hpp"
#include "numprobe/probe.hpp"
#include "numprobe/stats.hpp"

namespace oracles {

// ---------------------------------------------------------------------------
// ANOVA decomposition from the textbook raw-sum formulas with exhaustive
// summation (different algebraic route than the two-pass deviation sums).
// ---------------------------------------------------------------------------

struct AnovaSS {
    double ss_a, ss_b, ss_ab, ss_e, ss_total;
    double f_a, f_b, f_ab;
};

inline AnovaSS anova_direct_sums(const numprobe::CellGrid& g) {
    const int a = g.a, b = g.b, s = g.s;
    const double n = static_cast<double>(a) * b * s;
    double grand = 0.0, sumsq = 0.0;
    for (double v : g.responses) {
        grand += v;
        sumsq += v * v;
    }
    const double correction = grand * grand / n;

    double ss_a = 0.0;
    for (int i = 0; i < a; ++i) {
        double t = 0.0;
        for (int j = 0; j < b; ++j)
            for (int k = 0; k < s; ++k) t += g.at(i, j, k);
        ss_a += t * t / (static_cast<double>(b) * s);
    }
    ss_a -= correction;

    double ss_b = 0.0;
    for (int j = 0; j < b; ++j) {
        double t = 0.0;
        for (int i = 0; i < a; ++i)
            for (int k = 0; k < s; ++k) t += g.at(i, j, k);
        ss_b += t * t / (static_cast<double>(a) * s);
    }
    ss_b -= correction;

    double ss_cells = 0.0;
    for (int i = 0; i < a; ++i)
        for (int j = 0; j < b; ++j) {
            double t = 0.0;
            for (int k = 0; k < s; ++k) t += g.at(i, j, k);
            ss_cells += t * t / s;
        }
    ss_cells -= correction;

    AnovaSS o{};
    o.ss_total = sumsq - correction;
    o.ss_a = ss_a;
    o.ss_b = ss_b;
    o.ss_ab = ss_cells - ss_a - ss_b;
    o.ss_e = o.ss_total - ss_cells;
    const double ms_e = o.ss_e / (static_cast<double>(a) * b * (s - 1));
    o.f_a = (ss_a / (a - 1)) / ms_e;
    o.f_b = (ss_b / (b - 1)) / ms_e;
    o.f_ab = (o.ss_ab / ((a - 1) * (b - 1))) / ms_e;
    return o;
}

// ---------------------------------------------------------------------------
// Upper tail of the F distribution by adaptive Simpson quadrature of the
// density over t in [f, inf), via the substitution t = f/v.
// ---------------------------------------------------------------------------

namespace detail {

inline double f_log_density(double t, double d1, double d2) {
    const double log_norm = 0.5 * d1 * std::log(d1 / d2) -
                            (std::lgamma(0.5 * d1) + std::lgamma(0.5 * d2) - std::lgamma(0.5 * (d1 + d2)));
    return log_norm + (0.5 * d1 - 1.0) * std::log(t) - 0.5 * (d1 + d2) * std::log1p(d1 * t / d2);
}

inline double tail_integrand(double v, double f, double d1, double d2) {
    if (v <= 0.0) {
        if (d2 > 2.0) return 0.0;  // integrand vanishes at v=0 unless d2 == 2
        const double log_norm = 0.5 * d1 * std::log(d1 / d2) -
                                (std::lgamma(0.5 * d1) + std::lgamma(0.5 * d2) - std::lgamma(0.5 * (d1 + d2)));
        return std::exp(log_norm - 0.5 * (d1 + d2) * std::log(d1 / d2)) / f;
    }
    const double t = f / v;
    return std::exp(f_log_density(t, d1, d2)) * f / (v * v);
}

inline double adaptive_simpson(double lo, double hi, double flo, double fmid, double fhi, double whole,
                               double tol, int depth, double f, double d1, double d2) {
    const double mid = 0.5 * (lo + hi);
    const double lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
    const double flm = tail_integrand(lm, f, d1, d2), frm = tail_integrand(rm, f, d1, d2);
    const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
    const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(lo, mid, flo, flm, fmid, left, 0.5 * tol, depth - 1, f, d1, d2) +
           adaptive_simpson(mid, hi, fmid, frm, fhi, right, 0.5 * tol, depth - 1, f, d1, d2);
}

}  // namespace detail

inline double f_upper_tail_quadrature(double f, double d1, double d2, double tol = 1e-11) {
    const double flo = detail::tail_integrand(0.0, f, d1, d2);
    const double fmid = detail::tail_integrand(0.5, f, d1, d2);
    const double fhi = detail::tail_integrand(1.0, f, d1, d2);
    const double whole = 1.0 / 6.0 * (flo + 4.0 * fmid + fhi);
    return detail::adaptive_simpson(0.0, 1.0, flo, fmid, fhi, whole, tol, 48, f, d1, d2);
}

// ---------------------------------------------------------------------------
// Convex hull area by testing every point pair as a candidate hull edge and
// summing signed triangle areas around the hull centroid. O(n^3).
// ---------------------------------------------------------------------------

inline double brute_force_hull_area(std::vector<numprobe::Vec2> pts) {
    using numprobe::Vec2;
    using numprobe::cross;
    std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    pts.erase(std::unique(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }),
              pts.end());
    if (pts.size() < 3) return 0.0;
    std::vector<Vec2> hull_pts;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (i == j) continue;
            bool is_edge = true;
            for (std::size_t k = 0; k < pts.size(); ++k) {
                if (k == i || k == j) continue;
                if (cross(pts[j] - pts[i], pts[k] - pts[i]) < 0.0) {
                    is_edge = false;
                    break;
                }
            }
            if (is_edge) {
                hull_pts.push_back(pts[i]);
                hull_pts.push_back(pts[j]);
            }
        }
    }
    std::sort(hull_pts.begin(), hull_pts.end(),
              [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    hull_pts.erase(std::unique(hull_pts.begin(), hull_pts.end(),
                               [](Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }),
                   hull_pts.end());
    if (hull_pts.size() < 3) return 0.0;
    Vec2 centroid{0, 0};
    for (Vec2 p : hull_pts) centroid = centroid + p;
    centroid = (1.0 / static_cast<double>(hull_pts.size())) * centroid;
    std::sort(hull_pts.begin(), hull_pts.end(), [&](Vec2 a, Vec2 b) {
        return std::atan2(a.y - centroid.y, a.x - centroid.x) < std::atan2(b.y - centroid.y, b.x - centroid.x);
    });
    double area = 0.0;
    for (std::size_t i = 0; i < hull_pts.size(); ++i) {
        const Vec2 a = hull_pts[i] - centroid;
        const Vec2 b = hull_pts[(i + 1) % hull_pts.size()] - centroid;
        area += 0.5 * cross(a, b);
    }
    return std::abs(area);
}

// ---------------------------------------------------------------------------
// Pixel coverage by 16x16 supersampling per pixel.
// ---------------------------------------------------------------------------

inline double supersampled_coverage(const numprobe::DotDisplay& d, int resolution) {
    const double inv = 1.0 / resolution;
    double covered = 0.0;
    for (int y = 0; y < resolution; ++y) {
        for (int x = 0; x < resolution; ++x) {
            int inside = 0;
            for (int sy = 0; sy < 16; ++sy) {
                for (int sx = 0; sx < 16; ++sx) {
                    const numprobe::Vec2 p{(x + (sx + 0.5) / 16.0) * inv, (y + (sy + 0.5) / 16.0) * inv};
                    for (const numprobe::SceneObject& o : d.objects) {
                        if (numprobe::point_in_object(o, p)) {
                            ++inside;
                            break;
                        }
                    }
                }
            }
            covered += inside / 256.0;
        }
    }
    return covered;  // in pixels
}

// ---------------------------------------------------------------------------
// Estimation interval length by exhaustive (delta, epsilon) enumeration.
// ---------------------------------------------------------------------------

inline int interval_length_brute_force(const numprobe::PerceivedDistribution& dist, double coverage) {
    const int ix = numprobe::level_index(dist.presented);
    int best = -1;
    for (int delta = 0; delta <= ix; ++delta) {
        for (int eps = 0; eps + ix < numprobe::kLevelCount; ++eps) {
            double sum = 0.0;
            for (int i = ix - delta; i <= ix + eps; ++i) sum += dist.mass[static_cast<std::size_t>(i)];
            if (sum > coverage) {
                const int len = delta + eps + 1;
                if (best < 0 || len < best) best = len;
            }
        }
    }
    return best;
}

}  // namespace oracles
