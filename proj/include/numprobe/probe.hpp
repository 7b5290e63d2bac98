// The experiment layer: records final-conv-layer unit responses over balanced
// stimulus sets, detects numerosity-selective units per the two-way ANOVA
// conjunction criterion, sweeps the ANOVA sample size, pools tuning curves by
// preferred numerosity, and computes the generalization metrics.
#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "numprobe/common.hpp"
#include "numprobe/net.hpp"
#include "numprobe/stats.hpp"
#include "numprobe/stimgen.hpp"

namespace numprobe {

// Final-conv activations over a balanced probe set, unit-major:
// activations[((u * a + i) * b + j) * s + k].
struct ResponseMatrix {
    std::size_t unit_count = 0;
    int a = kLevelCount;
    int b = kSetCount;
    int s = 0;
    std::vector<float> activations;

    float at(std::size_t u, int i, int j, int k) const {
        return activations[((u * static_cast<std::size_t>(a) + static_cast<std::size_t>(i)) *
                                static_cast<std::size_t>(b) + static_cast<std::size_t>(j)) *
                               static_cast<std::size_t>(s) + static_cast<std::size_t>(k)];
    }
};

// Probes the network with a freshly generated balanced stimulus set of s
// replicates per (numerosity, set) cell.
inline ResponseMatrix record_responses(const Network<float>& net, int s, const GenerationParams& params,
                                       std::uint64_t seed) {
    if (s < 2) throw InsufficientReplicates("record_responses needs s >= 2");
    if (params.resolution != net.arch.input_resolution)
        throw ShapeMismatch("stimulus resolution does not match network input");
    const Dataset data = gen_dataset(s, params, seed);
    ResponseMatrix rm;
    rm.s = s;
    rm.unit_count = net.unit_count();
    rm.activations.assign(rm.unit_count * static_cast<std::size_t>(kLevelCount) * kSetCount * s, 0.0f);
    const std::size_t cell_stride = static_cast<std::size_t>(kLevelCount) * kSetCount * s;
    parallel_for(data.size(), [&](std::size_t idx) {
        const DatasetItem& item = data[idx];
        const auto out = net.forward(item.image);
        const std::size_t col = (static_cast<std::size_t>(item.level_index) * kSetCount +
                                 static_cast<std::size_t>(item.set_kind)) * static_cast<std::size_t>(s) +
                                static_cast<std::size_t>(item.replicate);
        for (std::size_t u = 0; u < rm.unit_count; ++u)
            rm.activations[u * cell_stride + col] = out.final_conv[u];
    });
    return rm;
}

struct SelectivityResult {
    double fraction = 0.0;
    std::vector<SelectivityLabel> labels;
    std::vector<AnovaTable> tables;
};

// Runs the per-unit ANOVA + conjunction classification across all units.
inline SelectivityResult selectivity_fraction(const ResponseMatrix& rm, double alpha = 0.01) {
    SelectivityResult res;
    res.labels.resize(rm.unit_count);
    res.tables.resize(rm.unit_count);
    const std::size_t per_unit = static_cast<std::size_t>(rm.a) * rm.b * rm.s;
    parallel_for(rm.unit_count, [&](std::size_t u) {
        std::vector<double> vals(per_unit);
        const float* src = &rm.activations[u * per_unit];
        for (std::size_t i = 0; i < per_unit; ++i) vals[i] = static_cast<double>(src[i]);
        const AnovaTable t = two_way_anova(CellGrid(rm.a, rm.b, rm.s, std::move(vals)));
        res.tables[u] = t;
        res.labels[u] = classify_selectivity(t, alpha);
    });
    std::size_t selective = 0;
    for (const auto& l : res.labels) selective += l.selective ? 1 : 0;
    res.fraction = rm.unit_count ? static_cast<double>(selective) / static_cast<double>(rm.unit_count) : 0.0;
    return res;
}

struct SweepResult {
    std::vector<int> s_values;
    std::vector<double> fraction_selective;
    std::vector<std::vector<SelectivityLabel>> labels;
};

// Fresh stimuli are generated at every sweep point (with seeds derived from
// the master seed), matching the protocol of generating s images per cell.
inline SweepResult sample_size_sweep(const Network<float>& net, const std::vector<int>& s_values,
                                     const GenerationParams& params, std::uint64_t seed, double alpha = 0.01) {
    if (s_values.empty()) throw DomainError("sweep needs at least one sample size");
    SweepResult sweep;
    sweep.s_values = s_values;
    for (std::size_t i = 0; i < s_values.size(); ++i) {
        const std::uint64_t point_seed = derive_seed(seed, {0x5EEDu, static_cast<std::uint64_t>(i),
                                                            static_cast<std::uint64_t>(s_values[i])});
        const ResponseMatrix rm = record_responses(net, s_values[i], params, point_seed);
        SelectivityResult sel = selectivity_fraction(rm, alpha);
        sweep.fraction_selective.push_back(sel.fraction);
        sweep.labels.push_back(std::move(sel.labels));
    }
    return sweep;
}

// Preferred numerosity: the level with the maximal mean response, ties broken
// toward the smaller level. Input is the 16 per-level means.
inline int preferred_numerosity(std::span<const double> level_means) {
    if (level_means.size() != static_cast<std::size_t>(kLevelCount))
        throw DomainError("preferred_numerosity expects 16 per-level values");
    int best = 0;
    for (int i = 0; i < kLevelCount; ++i) {
        if (!std::isfinite(level_means[static_cast<std::size_t>(i)]))
            throw DomainError("preferred_numerosity: non-finite mean response");
        if (level_means[static_cast<std::size_t>(i)] > level_means[static_cast<std::size_t>(best)]) best = i;
    }
    return numerosity_levels()[static_cast<std::size_t>(best)];
}

struct TuningCurve {
    int pn = 1;  // preferred numerosity (level value)
    std::array<double, kLevelCount> mean_response{};
    std::array<double, kLevelCount> se{};
    int n_units = 0;
};

// Pools the per-unit number response curves of all selective units that share
// a preferred numerosity. Each unit's curve is min-max normalized before
// pooling; the pooled curve is re-normalized to [0,1] with the SE scaled by
// the same factor.
inline std::vector<TuningCurve> tuning_curves(const ResponseMatrix& rm,
                                              const std::vector<SelectivityLabel>& labels) {
    if (labels.size() != rm.unit_count) throw DomainError("label count does not match unit count");
    const std::size_t reps = static_cast<std::size_t>(rm.b) * rm.s;
    std::array<std::vector<std::array<double, kLevelCount>>, kLevelCount> groups;
    for (std::size_t u = 0; u < rm.unit_count; ++u) {
        if (!labels[u].selective) continue;
        std::array<double, kLevelCount> curve{};
        for (int i = 0; i < kLevelCount; ++i) {
            double sum = 0.0;
            for (int j = 0; j < rm.b; ++j)
                for (int k = 0; k < rm.s; ++k) sum += static_cast<double>(rm.at(u, i, j, k));
            curve[static_cast<std::size_t>(i)] = sum / static_cast<double>(reps);
        }
        int arg = 0;
        for (int i = 1; i < kLevelCount; ++i)
            if (curve[static_cast<std::size_t>(i)] > curve[static_cast<std::size_t>(arg)]) arg = i;
        double lo = curve[0], hi = curve[0];
        for (double v : curve) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi > lo)
            for (double& v : curve) v = (v - lo) / (hi - lo);
        groups[static_cast<std::size_t>(arg)].push_back(curve);
    }

    std::vector<TuningCurve> out;
    for (int pn_idx = 0; pn_idx < kLevelCount; ++pn_idx) {
        const auto& g = groups[static_cast<std::size_t>(pn_idx)];
        if (g.empty()) continue;
        TuningCurve tc;
        tc.pn = numerosity_levels()[static_cast<std::size_t>(pn_idx)];
        tc.n_units = static_cast<int>(g.size());
        for (int i = 0; i < kLevelCount; ++i) {
            double mean = 0.0;
            for (const auto& c : g) mean += c[static_cast<std::size_t>(i)];
            mean /= static_cast<double>(g.size());
            double var = 0.0;
            for (const auto& c : g) {
                const double d = c[static_cast<std::size_t>(i)] - mean;
                var += d * d;
            }
            tc.mean_response[static_cast<std::size_t>(i)] = mean;
            tc.se[static_cast<std::size_t>(i)] =
                g.size() > 1 ? std::sqrt(var / static_cast<double>(g.size() - 1)) /
                                   std::sqrt(static_cast<double>(g.size()))
                             : 0.0;
        }
        double lo = tc.mean_response[0], hi = tc.mean_response[0];
        for (double v : tc.mean_response) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi > lo) {
            const double scale = 1.0 / (hi - lo);
            for (double& v : tc.mean_response) v = (v - lo) * scale;
            for (double& v : tc.se) v *= scale;
        }
        out.push_back(tc);
    }
    if (out.empty())
        throw NoSelectiveUnits("no selective units: tuning curves cannot be formed");
    return out;
}

// ---------------------------------------------------------------------------
// Classification metrics.
// ---------------------------------------------------------------------------

inline std::vector<int> predict_dataset(const Network<float>& net, const Dataset& data) {
    std::vector<int> pred(data.size(), -1);
    parallel_for(data.size(), [&](std::size_t i) { pred[i] = net.predict_index(data[i].image); });
    return pred;
}

struct AccuracyReport {
    double overall = 0.0;
    std::array<double, kLevelCount> per_level{};
};

inline AccuracyReport accuracy_from_predictions(const Dataset& data, const std::vector<int>& pred) {
    if (pred.size() != data.size()) throw DomainError("prediction count mismatch");
    AccuracyReport rep;
    std::array<std::size_t, kLevelCount> hits{}, totals{};
    std::size_t all_hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const int lvl = data[i].level_index;
        totals[static_cast<std::size_t>(lvl)]++;
        if (pred[i] == lvl) {
            hits[static_cast<std::size_t>(lvl)]++;
            all_hits++;
        }
    }
    rep.overall = data.empty() ? 0.0 : static_cast<double>(all_hits) / static_cast<double>(data.size());
    for (int i = 0; i < kLevelCount; ++i)
        rep.per_level[static_cast<std::size_t>(i)] =
            totals[static_cast<std::size_t>(i)]
                ? static_cast<double>(hits[static_cast<std::size_t>(i)]) / totals[static_cast<std::size_t>(i)]
                : 0.0;
    return rep;
}

inline AccuracyReport evaluate_accuracy(const Network<float>& net, const Dataset& data) {
    return accuracy_from_predictions(data, predict_dataset(net, data));
}

// ---------------------------------------------------------------------------
// Perceived-number distributions and estimation intervals.
// ---------------------------------------------------------------------------

struct PerceivedDistribution {
    int presented = 1;  // level value
    std::array<double, kLevelCount> mass{};
};

inline PerceivedDistribution distribution_from_predictions(const Dataset& data, const std::vector<int>& pred,
                                                           int presented_value) {
    const int lvl = level_index(presented_value);
    PerceivedDistribution dist;
    dist.presented = presented_value;
    std::size_t count = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i].level_index != lvl) continue;
        dist.mass[static_cast<std::size_t>(pred[i])] += 1.0;
        count++;
    }
    if (count < 30)
        throw InsufficientSamples("need >= 30 images of level " + std::to_string(presented_value) +
                                  ", have " + std::to_string(count));
    for (double& m : dist.mass) m /= static_cast<double>(count);
    return dist;
}

inline PerceivedDistribution perceived_distribution(const Network<float>& net, const Dataset& data,
                                                    int presented_value) {
    return distribution_from_predictions(data, predict_dataset(net, data), presented_value);
}

// Minimal window of consecutive labels containing the presented label whose
// total mass strictly exceeds `coverage`; reported as the label count of the
// window (delta + epsilon + 1).
inline int estimation_interval_length(const PerceivedDistribution& dist, double coverage = 0.85) {
    if (coverage <= 0.0 || coverage >= 1.0) throw DomainError("coverage must be in (0,1)");
    for (double m : dist.mass)
        if (m < 0.0) throw DomainError("distribution mass must be nonnegative");
    const int ix = level_index(dist.presented);
    for (int len = 1; len <= kLevelCount; ++len) {
        const int lo_min = std::max(0, ix - len + 1);
        const int lo_max = std::min(ix, kLevelCount - len);
        for (int lo = lo_min; lo <= lo_max; ++lo) {
            double sum = 0.0;
            for (int i = lo; i < lo + len; ++i) sum += dist.mass[static_cast<std::size_t>(i)];
            if (sum > coverage) return len;
        }
    }
    throw Unsatisfiable("no label window exceeds the requested coverage");
}

// Single local maximum over the ordered label axis (plateaus allowed).
inline bool is_unimodal(const std::array<double, kLevelCount>& mass) {
    int i = 1;
    while (i < kLevelCount && mass[static_cast<std::size_t>(i)] >= mass[static_cast<std::size_t>(i - 1)]) ++i;
    while (i < kLevelCount && mass[static_cast<std::size_t>(i)] <= mass[static_cast<std::size_t>(i - 1)]) ++i;
    return i == kLevelCount;
}

}  // namespace numprobe
