// Probe layer: response recording, selectivity classification, preferred
// numerosities, pooled tuning curves, accuracy metrics, and the estimation
// interval length against an exhaustive window-search oracle.
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "numprobe/probe.hpp"

#include "oracles.hpp"

using namespace numprobe;

namespace {

ArchitectureSpec probe_arch() { return ArchitectureSpec::desk(); }

GenerationParams probe_params() { return GenerationParams{}; }

template <typename Fn>
ResponseMatrix make_matrix(std::size_t units, int s, Fn&& fn) {
    ResponseMatrix rm;
    rm.unit_count = units;
    rm.s = s;
    rm.activations.resize(units * static_cast<std::size_t>(kLevelCount) * kSetCount * s);
    std::size_t idx = 0;
    for (std::size_t u = 0; u < units; ++u)
        for (int i = 0; i < kLevelCount; ++i)
            for (int j = 0; j < kSetCount; ++j)
                for (int k = 0; k < s; ++k) rm.activations[idx++] = static_cast<float>(fn(u, i, j, k));
    return rm;
}

}  // namespace

TEST(RecordResponses, ShapeDeterminismAndZeroModel) {
    const auto params = probe_params();
    auto net = Network<float>::from_checkpoint(init(probe_arch(), InitScheme::uniform(-0.1, 0.1), 3));
    const ResponseMatrix rm = record_responses(net, 2, params, 99);
    EXPECT_EQ(rm.unit_count, 1024u);
    EXPECT_EQ(rm.activations.size(), 1024u * 16 * 3 * 2);
    const ResponseMatrix rm2 = record_responses(net, 2, params, 99);
    EXPECT_EQ(rm.activations, rm2.activations);

    ModelCheckpoint zero = init(probe_arch(), InitScheme::uniform(-0.1, 0.1), 3);
    for (auto& arr : zero.params) std::fill(arr.begin(), arr.end(), 0.0f);
    auto znet = Network<float>::from_checkpoint(zero);
    const ResponseMatrix zrm = record_responses(znet, 2, params, 99);
    for (float v : zrm.activations) EXPECT_EQ(v, 0.0f);

    EXPECT_THROW(record_responses(net, 1, params, 1), InsufficientReplicates);
    GenerationParams bad = params;
    bad.resolution = 128;
    EXPECT_THROW(record_responses(net, 2, bad, 1), ShapeMismatch);
}

TEST(SelectivityFraction, ConstantUnitsAreAllDegenerate) {
    const ResponseMatrix rm = make_matrix(8, 3, [](std::size_t u, int, int, int) { return 1.0 + u; });
    const SelectivityResult res = selectivity_fraction(rm);
    EXPECT_EQ(res.fraction, 0.0);
    for (const auto& l : res.labels) EXPECT_EQ(l.reason, SelectivityReason::Degenerate);
}

TEST(SelectivityFraction, DetectsConstructedSelectiveUnit) {
    Rng rng(1);
    // Unit 0: strong numerosity effect, set-invariant. Units 1..7: pure noise.
    const ResponseMatrix rm = make_matrix(8, 20, [&](std::size_t u, int i, int, int) {
        const double noise = rng.normal(0.0, 0.1);
        return u == 0 ? 2.0 * i + noise : noise;
    });
    const SelectivityResult res = selectivity_fraction(rm, 0.01);
    EXPECT_TRUE(res.labels[0].selective);
    EXPECT_LT(res.tables[0].p_a, 1e-10);
}

TEST(SelectivityFraction, InvariantUnderUnitPermutation) {
    Rng rng(5);
    const ResponseMatrix rm = make_matrix(32, 5, [&](std::size_t u, int i, int, int) {
        return rng.normal(0.0, 1.0) + (u % 4 == 0 ? 0.8 * i : 0.0);
    });
    const SelectivityResult base = selectivity_fraction(rm);
    // Reverse the unit axis.
    ResponseMatrix rev = rm;
    const std::size_t per_unit = static_cast<std::size_t>(16) * 3 * 5;
    for (std::size_t u = 0; u < rm.unit_count; ++u)
        std::copy(rm.activations.begin() + static_cast<std::ptrdiff_t>(u * per_unit),
                  rm.activations.begin() + static_cast<std::ptrdiff_t>((u + 1) * per_unit),
                  rev.activations.begin() + static_cast<std::ptrdiff_t>((rm.unit_count - 1 - u) * per_unit));
    const SelectivityResult perm = selectivity_fraction(rev);
    EXPECT_EQ(base.fraction, perm.fraction);
}

TEST(PreferredNumerosity, ArgmaxAndTieBreak) {
    std::vector<double> means(16, 0.0);
    means[2] = 3.0;  // level value 4
    EXPECT_EQ(preferred_numerosity(means), 4);

    std::vector<double> decreasing(16);
    for (int i = 0; i < 16; ++i) decreasing[static_cast<std::size_t>(i)] = 16.0 - i;
    EXPECT_EQ(preferred_numerosity(decreasing), 1);

    std::vector<double> tie(16, 0.0);
    tie[3] = 5.0;  // level 6
    tie[4] = 5.0;  // level 8
    EXPECT_EQ(preferred_numerosity(tie), 6);

    EXPECT_THROW(preferred_numerosity(std::vector<double>(4, 0.0)), DomainError);
}

TEST(TuningCurves, SingletonPoolEqualsOwnNormalizedCurve) {
    // One selective unit with a clean peak at level index 5 (value 10).
    const ResponseMatrix rm = make_matrix(1, 2, [](std::size_t, int i, int, int) {
        return 10.0 - std::abs(i - 5);
    });
    std::vector<SelectivityLabel> labels(1);
    labels[0].selective = true;
    labels[0].reason = SelectivityReason::Selective;
    const auto curves = tuning_curves(rm, labels);
    ASSERT_EQ(curves.size(), 1u);
    EXPECT_EQ(curves[0].pn, 10);
    EXPECT_EQ(curves[0].n_units, 1);
    EXPECT_DOUBLE_EQ(curves[0].mean_response[5], 1.0);
    double lo = 1e30, hi = -1e30;
    for (double v : curves[0].mean_response) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    EXPECT_DOUBLE_EQ(lo, 0.0);
    EXPECT_DOUBLE_EQ(hi, 1.0);
    for (double se : curves[0].se) EXPECT_DOUBLE_EQ(se, 0.0);
}

TEST(TuningCurves, IdenticalUnitsHaveZeroSE) {
    const ResponseMatrix rm = make_matrix(4, 2, [](std::size_t, int i, int, int) {
        return std::exp(-0.1 * (i - 8) * (i - 8));
    });
    std::vector<SelectivityLabel> labels(4);
    for (auto& l : labels) {
        l.selective = true;
        l.reason = SelectivityReason::Selective;
    }
    const auto curves = tuning_curves(rm, labels);
    ASSERT_EQ(curves.size(), 1u);
    EXPECT_EQ(curves[0].n_units, 4);
    for (double se : curves[0].se) EXPECT_DOUBLE_EQ(se, 0.0);
    EXPECT_DOUBLE_EQ(*std::min_element(curves[0].mean_response.begin(), curves[0].mean_response.end()), 0.0);
    EXPECT_DOUBLE_EQ(*std::max_element(curves[0].mean_response.begin(), curves[0].mean_response.end()), 1.0);
}

TEST(TuningCurves, GroupsByPreferredNumerosity) {
    // Two units peaked at index 2, one at index 9.
    const ResponseMatrix rm = make_matrix(3, 2, [](std::size_t u, int i, int j, int k) {
        const int peak = (u < 2) ? 2 : 9;
        return 5.0 - std::abs(i - peak) + 0.01 * j + 0.001 * k;
    });
    std::vector<SelectivityLabel> labels(3);
    for (auto& l : labels) l.selective = true;
    const auto curves = tuning_curves(rm, labels);
    ASSERT_EQ(curves.size(), 2u);
    EXPECT_EQ(curves[0].pn, numerosity_levels()[2]);
    EXPECT_EQ(curves[0].n_units, 2);
    EXPECT_EQ(curves[1].pn, numerosity_levels()[9]);
    EXPECT_EQ(curves[1].n_units, 1);
}

TEST(TuningCurves, NoSelectiveUnitsIsTypedOutcome) {
    const ResponseMatrix rm = make_matrix(3, 2, [](std::size_t, int, int, int) { return 0.0; });
    std::vector<SelectivityLabel> labels(3);  // none selective
    EXPECT_THROW(tuning_curves(rm, labels), NoSelectiveUnits);
}

TEST(Accuracy, PerfectPredictorStubAndShape) {
    GenerationParams params = probe_params();
    const Dataset data = gen_dataset(3, params, 14);
    std::vector<int> perfect(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) perfect[i] = data[i].level_index;
    const AccuracyReport rep = accuracy_from_predictions(data, perfect);
    EXPECT_DOUBLE_EQ(rep.overall, 1.0);
    for (double a : rep.per_level) EXPECT_DOUBLE_EQ(a, 1.0);

    std::vector<int> wrong(data.size(), 0);
    const AccuracyReport rep2 = accuracy_from_predictions(data, wrong);
    EXPECT_EQ(rep2.per_level.size(), 16u);
    EXPECT_DOUBLE_EQ(rep2.per_level[0], 1.0);  // level 1 predicted everywhere
    for (std::size_t i = 1; i < 16; ++i) EXPECT_DOUBLE_EQ(rep2.per_level[i], 0.0);
    EXPECT_NEAR(rep2.overall, 1.0 / 16.0, 1e-12);
}

TEST(Accuracy, EvaluateAgreesWithPredictDefinition) {
    const auto params = probe_params();
    auto net = Network<float>::from_checkpoint(init(probe_arch(), InitScheme::normal(0.0, 0.05), 8));
    const Dataset data = gen_dataset(2, params, 21);
    const auto pred = predict_dataset(net, data);
    const AccuracyReport a = evaluate_accuracy(net, data);
    const AccuracyReport b = accuracy_from_predictions(data, pred);
    EXPECT_DOUBLE_EQ(a.overall, b.overall);
    double mean = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) mean += pred[i] == data[i].level_index ? 1.0 : 0.0;
    EXPECT_DOUBLE_EQ(a.overall, mean / static_cast<double>(data.size()));
}

TEST(PerceivedDistribution, PointMassForPerfectStubAndSampleGuard) {
    GenerationParams params = probe_params();
    const Dataset data = gen_dataset(30, params, 3);
    std::vector<int> perfect(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) perfect[i] = data[i].level_index;
    const PerceivedDistribution dist = distribution_from_predictions(data, perfect, 16);
    double sum = 0.0;
    for (double m : dist.mass) sum += m;
    EXPECT_NEAR(sum, 1.0, 1e-9);
    EXPECT_DOUBLE_EQ(dist.mass[level_index(16)], 1.0);
    EXPECT_EQ(estimation_interval_length(dist, 0.85), 1);

    const Dataset small = gen_dataset(9, params, 4);
    std::vector<int> pred(small.size(), 0);
    EXPECT_THROW(distribution_from_predictions(small, pred, 16), InsufficientSamples);
}

TEST(IntervalLength, HandWorkedCases) {
    PerceivedDistribution d;
    d.presented = 16;
    d.mass.fill(0.0);
    d.mass[level_index(16)] = 1.0;
    EXPECT_EQ(estimation_interval_length(d, 0.85), 1);

    d.mass.fill(0.0);
    d.mass[level_index(16)] = 0.8;
    d.mass[level_index(14)] = 0.1;
    d.mass[level_index(18)] = 0.1;
    EXPECT_EQ(estimation_interval_length(d, 0.85), 2);  // 0.8 + one neighbour = 0.9 > 0.85

    d.mass.fill(1.0 / 16.0);
    for (int presented : {1, 16, 30}) {
        d.presented = presented;
        EXPECT_EQ(estimation_interval_length(d, 0.85), oracles::interval_length_brute_force(d, 0.85));
        EXPECT_EQ(estimation_interval_length(d, 0.85), 14);  // 14/16 = 0.875 > 0.85
    }

    d.mass.fill(0.0);
    d.presented = 16;
    EXPECT_THROW(estimation_interval_length(d, 0.85), Unsatisfiable);
    d.mass.fill(1.0 / 16.0);
    EXPECT_THROW(estimation_interval_length(d, 0.0), DomainError);
    d.mass[0] = -0.2;
    EXPECT_THROW(estimation_interval_length(d, 0.85), DomainError);
}

TEST(IntervalLength, MatchesBruteForceOnRandomDistributions) {
    Rng rng(616);
    for (int trial = 0; trial < 2000; ++trial) {
        PerceivedDistribution d;
        d.presented = numerosity_levels()[rng.uniform_index(16)];
        double sum = 0.0;
        for (double& m : d.mass) {
            m = rng.uniform() < 0.3 ? 0.0 : rng.uniform();
            sum += m;
        }
        if (sum == 0.0) {
            d.mass[level_index(d.presented)] = 1.0;
            sum = 1.0;
        }
        for (double& m : d.mass) m /= sum;
        const double coverage = 0.5 + 0.45 * rng.uniform();
        EXPECT_EQ(estimation_interval_length(d, coverage), oracles::interval_length_brute_force(d, coverage));
    }
}

TEST(IntervalLength, MonotoneInCoverage) {
    Rng rng(77);
    PerceivedDistribution d;
    d.presented = 12;
    double sum = 0.0;
    for (double& m : d.mass) {
        m = rng.uniform();
        sum += m;
    }
    for (double& m : d.mass) m /= sum;
    int prev = 16;
    for (double cov = 0.95; cov > 0.05; cov -= 0.05) {
        const int len = estimation_interval_length(d, cov);
        EXPECT_LE(len, prev);
        prev = len;
    }
}

TEST(Unimodality, ShapeChecker) {
    std::array<double, 16> m{};
    m.fill(0.0);
    m[5] = 0.6;
    m[6] = 0.3;
    m[4] = 0.1;
    EXPECT_TRUE(is_unimodal(m));
    m[10] = 0.2;  // second bump
    EXPECT_FALSE(is_unimodal(m));
    m.fill(1.0 / 16.0);
    EXPECT_TRUE(is_unimodal(m));
}

TEST(Refutation, UntrainedNetSelectivityShrinksWithSampleSize) {
    // The core phenomenon: an untrained network shows "numerosity-selective"
    // units at small ANOVA sample sizes, and loses them as s grows.
    const auto params = probe_params();
    auto net = Network<float>::from_checkpoint(init(probe_arch(), InitScheme::uniform(-0.1, 0.1), 90210));
    ASSERT_GE(net.unit_count(), 1000u);
    const SweepResult sweep = sample_size_sweep(net, {7, 100}, params, 1848);
    const double at7 = sweep.fraction_selective[0];
    const double at100 = sweep.fraction_selective[1];
    EXPECT_GT(at7, at100);
    for (double f : sweep.fraction_selective) {
        EXPECT_GE(f, 0.0);
        EXPECT_LE(f, 1.0);
    }
}

TEST(Sweep, DeterministicAndValidated) {
    const auto params = probe_params();
    auto net = Network<float>::from_checkpoint(init(probe_arch(), InitScheme::normal(0.0, 0.05), 11));
    const SweepResult a = sample_size_sweep(net, {2, 3}, params, 5);
    const SweepResult b = sample_size_sweep(net, {2, 3}, params, 5);
    EXPECT_EQ(a.fraction_selective, b.fraction_selective);
    EXPECT_THROW(sample_size_sweep(net, {}, params, 5), DomainError);
}
