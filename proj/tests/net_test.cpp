// Network module: initialization contracts, forward-pass invariants, the
// finite-difference gradient oracle, training behaviour, and the bit-exact
// checkpoint format.
#include <gtest/gtest.h>

#include <cmath>

#include "numprobe/net.hpp"

using namespace numprobe;

namespace {

ArchitectureSpec micro_arch() {
    // 537 parameters: small enough for exhaustive finite differences.
    ArchitectureSpec a;
    a.input_resolution = 12;
    a.layers = {
        LayerSpec::conv(3, 4, 1), LayerSpec::relu(),
        LayerSpec::maxpool(2),
        LayerSpec::conv(3, 6, 2), LayerSpec::relu(),
        LayerSpec::fully_connected(5), LayerSpec::softmax(),
    };
    a.final_conv_index = 3;
    a.validate();
    return a;
}

ArchitectureSpec tiny_train_arch(int classes = 4) {
    ArchitectureSpec a;
    a.input_resolution = 32;
    a.layers = {
        LayerSpec::conv(3, 8, 2),  LayerSpec::relu(),
        LayerSpec::conv(3, 16, 2), LayerSpec::relu(),
        LayerSpec::maxpool(2),
        LayerSpec::fully_connected(classes), LayerSpec::softmax(),
    };
    a.final_conv_index = 2;
    a.validate();
    return a;
}

std::vector<TrainExample> random_examples(int count, int resolution, int classes, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TrainExample> ex(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        ex[static_cast<std::size_t>(i)].pixels.resize(static_cast<std::size_t>(resolution) * resolution);
        for (float& p : ex[static_cast<std::size_t>(i)].pixels)
            p = rng.uniform() < 0.15 ? 1.0f : 0.0f;
        ex[static_cast<std::size_t>(i)].label = i % classes;
    }
    return ex;
}

}  // namespace

TEST(Init, UniformWeightsStayInRange) {
    const auto m = init(ArchitectureSpec::desk(), InitScheme::uniform(-0.1, 0.1), 77);
    std::size_t checked = 0;
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        if (i % 2 == 1) {
            for (float b : m.params[i]) EXPECT_EQ(b, 0.0f);  // biases zero
            continue;
        }
        for (float w : m.params[i]) {
            EXPECT_GE(w, -0.1f);
            EXPECT_LE(w, 0.1f);
            ++checked;
        }
    }
    EXPECT_GT(checked, 30000u);
}

TEST(Init, NormalSampleMeanWithinLawOfLargeNumbersBound) {
    ArchitectureSpec a = ArchitectureSpec::desk();
    const auto m = init(a, InitScheme::normal(0.0, 0.05), 1234);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < m.params.size(); i += 2) {
        for (float w : m.params[i]) {
            sum += w;
            ++n;
        }
    }
    ASSERT_GE(n, 48000u);
    const double mean = sum / static_cast<double>(n);
    EXPECT_LE(std::abs(mean), 3.0 * 0.05 / std::sqrt(static_cast<double>(n)));
}

TEST(Init, DeterministicInSeed) {
    const auto a = init(ArchitectureSpec::desk(), InitScheme::uniform(-0.1, 0.1), 5);
    const auto b = init(ArchitectureSpec::desk(), InitScheme::uniform(-0.1, 0.1), 5);
    EXPECT_EQ(serialize_checkpoint(a), serialize_checkpoint(b));
    const auto c = init(ArchitectureSpec::desk(), InitScheme::uniform(-0.1, 0.1), 6);
    EXPECT_NE(serialize_checkpoint(a), serialize_checkpoint(c));
}

TEST(Init, SchemeValidation) {
    EXPECT_THROW(InitScheme::uniform(0.1, -0.1), DomainError);
    EXPECT_THROW(InitScheme::normal(0.0, 0.0), DomainError);
}

TEST(Forward, ZeroWeightModelGivesUniformProbabilities) {
    ModelCheckpoint m = init(tiny_train_arch(4), InitScheme::uniform(-0.1, 0.1), 3);
    for (auto& arr : m.params) std::fill(arr.begin(), arr.end(), 0.0f);
    auto net = Network<float>::from_checkpoint(m);
    std::vector<float> zeros(32 * 32, 0.0f);
    const auto out = net.forward(std::span<const float>(zeros));
    for (float p : out.probs) EXPECT_NEAR(p, 0.25f, 1e-6f);
    for (float a : out.final_conv) EXPECT_EQ(a, 0.0f);
    EXPECT_EQ(net.predict_index(std::span<const float>(zeros)), 0);  // tie-break to the smallest label
}

TEST(Forward, SoftmaxSumsToOne) {
    const auto m = init(ArchitectureSpec::desk(), InitScheme::normal(0.0, 0.05), 17);
    auto net = Network<float>::from_checkpoint(m);
    Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<float> px(64 * 64);
        for (float& p : px) p = rng.uniform() < 0.1 ? 1.0f : 0.0f;
        const auto out = net.forward(std::span<const float>(px));
        double sum = 0.0;
        for (float p : out.probs) {
            EXPECT_GE(p, 0.0f);
            sum += p;
        }
        EXPECT_NEAR(sum, 1.0, 1e-6);
        EXPECT_EQ(out.final_conv.size(), net.arch.final_conv_unit_count());
    }
}

TEST(Forward, ShapeMismatchRejected) {
    const auto m = init(ArchitectureSpec::desk(), InitScheme::uniform(-0.1, 0.1), 1);
    auto net = Network<float>::from_checkpoint(m);
    std::vector<float> wrong(32 * 32, 0.0f);
    EXPECT_THROW(net.forward(std::span<const float>(wrong)), ShapeMismatch);
    StimulusImage img;
    img.resolution = 32;
    img.pixels.assign(32 * 32, 0);
    EXPECT_THROW(net.forward(img), ShapeMismatch);
}

TEST(Architecture, UnitCountsDeriveFromSpec) {
    const auto desk = ArchitectureSpec::desk();
    // 64 -> 32 -> 16 -> pool 8, two stride-1 convs, so 64 channels at 8x8.
    EXPECT_EQ(desk.final_conv_unit_count(), 4096u);
    const auto full = ArchitectureSpec::full();
    EXPECT_EQ(full.final_conv_unit_count(), 37632u);  // 192 x 14 x 14
    int convs = 0, pools = 0, fcs = 0;
    for (const auto& l : full.layers) {
        convs += l.kind == LayerKind::Conv;
        pools += l.kind == LayerKind::MaxPool;
        fcs += l.kind == LayerKind::FullyConnected;
    }
    EXPECT_EQ(convs, 8);
    EXPECT_EQ(pools, 5);
    EXPECT_EQ(fcs, 1);
}

TEST(Architecture, ValidationRejectsBadSpecs) {
    ArchitectureSpec a = ArchitectureSpec::desk();
    a.final_conv_index = 1;  // points at a ReLU
    EXPECT_THROW(a.validate(), DomainError);
    a = ArchitectureSpec::desk();
    a.layers.pop_back();  // no softmax
    EXPECT_THROW(a.validate(), DomainError);
}

TEST(Architecture, FullVariantForwardSmoke) {
    const auto m = init(ArchitectureSpec::full(), InitScheme::uniform(-0.01, 0.01), 2);
    auto net = Network<float>::from_checkpoint(m);
    Rng rng(5);
    std::vector<float> px(224 * 224, 0.0f);
    for (float& p : px) p = rng.uniform() < 0.05 ? 1.0f : 0.0f;
    const auto out = net.forward(std::span<const float>(px));
    EXPECT_EQ(out.final_conv.size(), 37632u);
    double sum = 0.0;
    for (float p : out.probs) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-6);
}

TEST(Gradients, MatchCentralFiniteDifferences) {
    const ModelCheckpoint m = init(micro_arch(), InitScheme::normal(0.0, 0.2), 909);
    auto net = Network<double>::from_checkpoint(m);
    std::size_t total_params = 0;
    for (const auto& arr : net.params) total_params += arr.size();
    ASSERT_LE(total_params, 5000u);

    Rng rng(31);
    std::vector<double> px(12 * 12);
    for (double& p : px) p = rng.uniform();  // continuous input avoids pool ties
    const int label = 3;

    std::vector<std::vector<double>> grads;
    net.example_gradients(std::span<const double>(px), label, grads);

    const double h = 1e-4;
    double max_rel = 0.0;
    for (int sample = 0; sample < 100; ++sample) {
        const std::size_t ai = rng.uniform_index(net.params.size());
        if (net.params[ai].empty()) continue;
        const std::size_t wi = rng.uniform_index(net.params[ai].size());
        const double saved = net.params[ai][wi];
        net.params[ai][wi] = saved + h;
        const double lp = net.example_loss(std::span<const double>(px), label);
        net.params[ai][wi] = saved - h;
        const double lm = net.example_loss(std::span<const double>(px), label);
        net.params[ai][wi] = saved;
        const double fd = (lp - lm) / (2.0 * h);
        const double an = grads[ai][wi];
        const double rel = std::abs(an - fd) / std::max(std::abs(an) + std::abs(fd), 1e-8);
        max_rel = std::max(max_rel, rel);
    }
    EXPECT_LT(max_rel, 1e-4);
}

TEST(Train, OverfitsTenImages) {
    ModelCheckpoint start = init(tiny_train_arch(4), InitScheme::normal(0.0, 0.05), 44);
    start.meta.labels = {0, 1, 2, 3};
    const auto data = random_examples(10, 32, 4, 321);
    Hyper hyper;
    hyper.learning_rate = 0.02;
    hyper.batch_size = 10;
    hyper.epochs = 200;
    hyper.lr_halve_every = 0;
    hyper.seed = 5;
    const TrainResult result = train(start, data, hyper);
    ASSERT_EQ(result.history.size(), 200u);
    EXPECT_EQ(result.history.back().accuracy, 1.0);

    // Smoke property: loss is non-increasing apart from occasional upticks.
    int upticks = 0;
    for (std::size_t e = 1; e < result.history.size(); ++e)
        if (result.history[e].loss > result.history[e - 1].loss) ++upticks;
    EXPECT_LE(upticks, static_cast<int>(result.history.size() / 20));
}

TEST(Train, BitReproducibleGivenSeed) {
    ModelCheckpoint start = init(tiny_train_arch(4), InitScheme::normal(0.0, 0.05), 44);
    start.meta.labels = {0, 1, 2, 3};
    const auto data = random_examples(24, 32, 4, 9);
    Hyper hyper;
    hyper.epochs = 3;
    hyper.batch_size = 8;
    hyper.seed = 12;
    const TrainResult a = train(start, data, hyper);
    const TrainResult b = train(start, data, hyper);
    EXPECT_EQ(serialize_checkpoint(a.checkpoint), serialize_checkpoint(b.checkpoint));
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        EXPECT_EQ(a.history[e].loss, b.history[e].loss);
        EXPECT_EQ(a.history[e].accuracy, b.history[e].accuracy);
    }
}

TEST(Train, DivergenceRaisesTypedError) {
    ModelCheckpoint start = init(tiny_train_arch(4), InitScheme::normal(0.0, 0.05), 44);
    start.meta.labels = {0, 1, 2, 3};
    const auto data = random_examples(16, 32, 4, 77);
    Hyper hyper;
    hyper.learning_rate = 1e30;
    hyper.epochs = 30;
    hyper.batch_size = 8;
    EXPECT_THROW(train(start, data, hyper), DivergenceError);
}

TEST(Train, RejectsBadInput) {
    ModelCheckpoint start = init(tiny_train_arch(4), InitScheme::normal(0.0, 0.05), 44);
    const auto data = random_examples(4, 32, 4, 1);
    Hyper hyper;
    hyper.batch_size = 8;  // larger than the dataset
    EXPECT_THROW(train(start, data, hyper), DomainError);
    auto bad = data;
    bad[0].label = 99;
    hyper.batch_size = 2;
    EXPECT_THROW(train(start, bad, hyper), DomainError);
}

TEST(Checkpoint, RoundTripsBitExactly) {
    ModelCheckpoint m = init(ArchitectureSpec::desk(), InitScheme::normal(0.0, 0.05), 4321);
    m.meta.labels = numerosity_levels();
    m.meta.task = "numerosity";
    m.meta.epochs = 60;
    m.meta.final_loss = 0.123f;
    m.meta.final_acc = 0.986f;
    const std::string path = ::testing::TempDir() + "/roundtrip.bin";
    save_checkpoint(m, path);
    const ModelCheckpoint back = load_checkpoint(path);
    EXPECT_EQ(serialize_checkpoint(m), serialize_checkpoint(back));
    EXPECT_EQ(back.meta.labels, m.meta.labels);
    EXPECT_EQ(back.meta.task, "numerosity");
}

TEST(Checkpoint, CorruptMagicRejected) {
    ModelCheckpoint m = init(micro_arch(), InitScheme::uniform(-0.1, 0.1), 1);
    auto bytes = serialize_checkpoint(m);
    bytes[0] = 'X';
    EXPECT_THROW(deserialize_checkpoint(bytes.data(), bytes.size()), FormatError);
}

TEST(Checkpoint, WrongVersionNamesBothVersions) {
    ModelCheckpoint m = init(micro_arch(), InitScheme::uniform(-0.1, 0.1), 1);
    auto bytes = serialize_checkpoint(m);
    bytes[9] = 9;  // version field follows the 9-byte magic
    try {
        deserialize_checkpoint(bytes.data(), bytes.size());
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("9"), std::string::npos);
        EXPECT_NE(msg.find("1"), std::string::npos);
    }
}

TEST(Checkpoint, TruncationDetected) {
    ModelCheckpoint m = init(micro_arch(), InitScheme::uniform(-0.1, 0.1), 1);
    const auto bytes = serialize_checkpoint(m);
    EXPECT_THROW(deserialize_checkpoint(bytes.data(), bytes.size() - 10), FormatError);
    auto padded = bytes;
    padded.push_back(0);
    EXPECT_THROW(deserialize_checkpoint(padded.data(), padded.size()), FormatError);
}
