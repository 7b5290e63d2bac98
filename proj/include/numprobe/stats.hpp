// Balanced two-way fixed-effects ANOVA with replication, plus the
// F-distribution upper tail computed through the regularized incomplete beta
// function. This is the machinery behind the numerosity-selectivity test.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "numprobe/common.hpp"

namespace numprobe {

// Balanced response grid: a levels of factor A x b levels of factor B x s
// replicates per cell, laid out [i*b*s + j*s + k].
struct CellGrid {
    int a = 0;
    int b = 0;
    int s = 0;
    std::vector<double> responses;

    CellGrid() = default;
    CellGrid(int a_, int b_, int s_, std::vector<double> vals) : a(a_), b(b_), s(s_), responses(std::move(vals)) {
        if (a < 2 || b < 2) throw UnbalancedDesign("need at least two levels per factor");
        if (s < 2) throw InsufficientReplicates("need s >= 2 replicates per cell");
        if (responses.size() != static_cast<std::size_t>(a) * b * s)
            throw UnbalancedDesign("response count " + std::to_string(responses.size()) +
                                   " does not fill a " + std::to_string(a) + "x" + std::to_string(b) +
                                   "x" + std::to_string(s) + " grid");
        for (double v : responses)
            if (!std::isfinite(v)) throw DomainError("responses must be finite");
    }

    // Builds a grid from per-cell vectors; ragged input is an unbalanced design.
    static CellGrid from_cells(int a_, int b_, const std::vector<std::vector<double>>& cells) {
        if (cells.size() != static_cast<std::size_t>(a_) * b_)
            throw UnbalancedDesign("expected " + std::to_string(a_ * b_) + " cells");
        const std::size_t s_ = cells.empty() ? 0 : cells[0].size();
        for (const auto& c : cells)
            if (c.size() != s_) throw UnbalancedDesign("cells have differing replicate counts");
        if (s_ < 2) throw InsufficientReplicates("need s >= 2 replicates per cell");
        std::vector<double> flat;
        flat.reserve(cells.size() * s_);
        for (const auto& c : cells) flat.insert(flat.end(), c.begin(), c.end());
        return CellGrid(a_, b_, static_cast<int>(s_), std::move(flat));
    }

    double at(int i, int j, int k) const {
        return responses[(static_cast<std::size_t>(i) * b + j) * s + k];
    }
};

struct AnovaTable {
    double ss_a = 0.0, ss_b = 0.0, ss_ab = 0.0, ss_e = 0.0, ss_total = 0.0;
    double f_a = 0.0, f_b = 0.0, f_ab = 0.0;
    double p_a = 1.0, p_b = 1.0, p_ab = 1.0;
    int df_a = 0, df_b = 0, df_ab = 0, df_e = 0;
    bool degenerate = false;  // within-cell variance is (numerically) zero
};

enum class SelectivityReason : std::uint8_t {
    Selective = 0,
    FailNumerosity = 1,
    FailStimulusInvariance = 2,
    FailInteraction = 3,
    Degenerate = 4,
};

struct SelectivityLabel {
    bool selective = false;
    SelectivityReason reason = SelectivityReason::Degenerate;
};

inline const char* selectivity_reason_name(SelectivityReason r) {
    switch (r) {
        case SelectivityReason::Selective: return "selective";
        case SelectivityReason::FailNumerosity: return "fail_numerosity";
        case SelectivityReason::FailStimulusInvariance: return "fail_stimulus_invariance";
        case SelectivityReason::FailInteraction: return "fail_interaction";
        case SelectivityReason::Degenerate: return "degenerate";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Regularized incomplete beta function I_x(a,b), by continued fraction
// (Lentz's method), and the F-distribution upper tail built on it.
// ---------------------------------------------------------------------------

namespace detail {

inline double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-15;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace detail

inline double regularized_incomplete_beta(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0) throw DomainError("incomplete beta: a,b must be positive");
    if (x < 0.0 || x > 1.0) throw DomainError("incomplete beta: x must be in [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * detail::betacf(a, b, x) / a;
    return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          b * std::log1p(-x) + a * std::log(x)) *
                     detail::betacf(b, a, 1.0 - x) / b;
}

// Upper-tail p-value of the F distribution:
//   P(F_{d1,d2} > f) = I_x(d2/2, d1/2),  x = d2 / (d2 + d1*f).
inline double f_upper_tail(double f, double df1, double df2) {
    if (f < 0.0) throw DomainError("F statistic must be nonnegative");
    if (df1 < 1.0 || df2 < 1.0) throw DomainError("degrees of freedom must be >= 1");
    if (f == 0.0) return 1.0;
    if (std::isinf(f)) return 0.0;
    const double x = df2 / (df2 + df1 * f);
    return regularized_incomplete_beta(0.5 * df2, 0.5 * df1, x);
}

// ---------------------------------------------------------------------------
// Two-way ANOVA.
// ---------------------------------------------------------------------------

// Fixed-effects decomposition for the balanced design. Accumulation is done in
// two passes (mean, then deviations) in double precision; replicates inside a
// cell are summed in sorted order so the result is exactly invariant under
// replicate permutation.
inline AnovaTable two_way_anova(const CellGrid& grid) {
    const int a = grid.a, b = grid.b, s = grid.s;
    if (a < 2 || b < 2) throw UnbalancedDesign("need at least two levels per factor");
    if (s < 2) throw InsufficientReplicates("need s >= 2 replicates per cell");
    const double n_total = static_cast<double>(a) * b * s;

    // Per-cell sums over sorted replicates.
    std::vector<double> cell_sum(static_cast<std::size_t>(a) * b, 0.0);
    std::vector<double> sorted(static_cast<std::size_t>(s));
    std::vector<double> cell_sorted(static_cast<std::size_t>(a) * b * s);
    for (int i = 0; i < a; ++i) {
        for (int j = 0; j < b; ++j) {
            for (int k = 0; k < s; ++k) sorted[static_cast<std::size_t>(k)] = grid.at(i, j, k);
            std::sort(sorted.begin(), sorted.end());
            double sum = 0.0;
            for (int k = 0; k < s; ++k) {
                sum += sorted[static_cast<std::size_t>(k)];
                cell_sorted[(static_cast<std::size_t>(i) * b + j) * s + k] = sorted[static_cast<std::size_t>(k)];
            }
            cell_sum[static_cast<std::size_t>(i) * b + j] = sum;
        }
    }

    double grand_sum = 0.0;
    for (double cs : cell_sum) grand_sum += cs;
    const double grand_mean = grand_sum / n_total;

    AnovaTable t;
    t.df_a = a - 1;
    t.df_b = b - 1;
    t.df_ab = (a - 1) * (b - 1);
    t.df_e = a * b * (s - 1);

    for (int i = 0; i < a; ++i) {
        double row = 0.0;
        for (int j = 0; j < b; ++j) row += cell_sum[static_cast<std::size_t>(i) * b + j];
        const double dev = row / (static_cast<double>(b) * s) - grand_mean;
        t.ss_a += dev * dev;
    }
    t.ss_a *= static_cast<double>(b) * s;

    for (int j = 0; j < b; ++j) {
        double col = 0.0;
        for (int i = 0; i < a; ++i) col += cell_sum[static_cast<std::size_t>(i) * b + j];
        const double dev = col / (static_cast<double>(a) * s) - grand_mean;
        t.ss_b += dev * dev;
    }
    t.ss_b *= static_cast<double>(a) * s;

    for (int i = 0; i < a; ++i) {
        double row_mean = 0.0;
        for (int j = 0; j < b; ++j) row_mean += cell_sum[static_cast<std::size_t>(i) * b + j];
        row_mean /= static_cast<double>(b) * s;
        for (int j = 0; j < b; ++j) {
            double col_mean = 0.0;
            for (int ii = 0; ii < a; ++ii) col_mean += cell_sum[static_cast<std::size_t>(ii) * b + j];
            col_mean /= static_cast<double>(a) * s;
            const double cell_mean = cell_sum[static_cast<std::size_t>(i) * b + j] / s;
            const double dev = cell_mean - row_mean - col_mean + grand_mean;
            t.ss_ab += dev * dev;
        }
    }
    t.ss_ab *= static_cast<double>(s);

    for (int i = 0; i < a; ++i) {
        for (int j = 0; j < b; ++j) {
            const double cell_mean = cell_sum[static_cast<std::size_t>(i) * b + j] / s;
            for (int k = 0; k < s; ++k) {
                const double dev = cell_sorted[(static_cast<std::size_t>(i) * b + j) * s + k] - cell_mean;
                t.ss_e += dev * dev;
            }
        }
    }

    for (int i = 0; i < a; ++i)
        for (int j = 0; j < b; ++j)
            for (int k = 0; k < s; ++k) {
                const double dev = cell_sorted[(static_cast<std::size_t>(i) * b + j) * s + k] - grand_mean;
                t.ss_total += dev * dev;
            }

    if (t.ss_e <= 1e-12 * t.ss_total || t.ss_total == 0.0) {
        // Dead/constant unit: F is undefined, nothing to detect.
        t.degenerate = true;
        t.p_a = t.p_b = t.p_ab = 1.0;
        t.f_a = t.f_b = t.f_ab = 0.0;
        return t;
    }

    const double ms_e = t.ss_e / t.df_e;
    t.f_a = (t.ss_a / t.df_a) / ms_e;
    t.f_b = (t.ss_b / t.df_b) / ms_e;
    t.f_ab = (t.ss_ab / t.df_ab) / ms_e;
    t.p_a = f_upper_tail(t.f_a, t.df_a, t.df_e);
    t.p_b = f_upper_tail(t.f_b, t.df_b, t.df_e);
    t.p_ab = f_upper_tail(t.f_ab, t.df_ab, t.df_e);
    return t;
}

// Conjunction criterion: significant numerosity effect, no stimulus-set
// effect, no interaction. Comparisons are strict on both sides, so p == alpha
// never counts as selective.
inline SelectivityLabel classify_selectivity(const AnovaTable& t, double alpha = 0.01) {
    if (alpha <= 0.0 || alpha >= 1.0) throw DomainError("alpha must be in (0,1)");
    SelectivityLabel label;
    if (t.degenerate) {
        label.reason = SelectivityReason::Degenerate;
    } else if (!(t.p_a < alpha)) {
        label.reason = SelectivityReason::FailNumerosity;
    } else if (!(t.p_b > alpha)) {
        label.reason = SelectivityReason::FailStimulusInvariance;
    } else if (!(t.p_ab > alpha)) {
        label.reason = SelectivityReason::FailInteraction;
    } else {
        label.reason = SelectivityReason::Selective;
        label.selective = true;
    }
    return label;
}

}  // namespace numprobe
