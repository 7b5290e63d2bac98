// A small convolutional network built from first principles: Conv / MaxPool /
// ReLU / FullyConnected / Softmax layers, SGD-with-momentum training,
// deterministic initialization, and a bit-exact binary checkpoint format.
// The scalar type is a template parameter: float for training, double for
// finite-difference verification.
#pragma once

#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "numprobe/common.hpp"
#include "numprobe/stimgen.hpp"

namespace numprobe {

enum class LayerKind : std::uint8_t { Conv = 0, MaxPool = 1, ReLU = 2, FullyConnected = 3, Softmax = 4 };

struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    int kernel = 0;    // Conv
    int channels = 0;  // Conv
    int stride = 1;    // Conv
    int window = 0;    // MaxPool
    int out_dim = 0;   // FullyConnected

    static LayerSpec conv(int kernel, int channels, int stride = 1) {
        LayerSpec l;
        l.kind = LayerKind::Conv;
        l.kernel = kernel;
        l.channels = channels;
        l.stride = stride;
        return l;
    }
    static LayerSpec maxpool(int window) {
        LayerSpec l;
        l.kind = LayerKind::MaxPool;
        l.window = window;
        return l;
    }
    static LayerSpec relu() { return LayerSpec{}; }
    static LayerSpec fully_connected(int out_dim) {
        LayerSpec l;
        l.kind = LayerKind::FullyConnected;
        l.out_dim = out_dim;
        return l;
    }
    static LayerSpec softmax() {
        LayerSpec l;
        l.kind = LayerKind::Softmax;
        return l;
    }

    bool operator==(const LayerSpec&) const = default;
};

struct TensorShape {
    int c = 0, h = 0, w = 0;
    std::size_t count() const { return static_cast<std::size_t>(c) * h * w; }
    bool operator==(const TensorShape&) const = default;
};

struct ArchitectureSpec {
    int input_resolution = 64;
    std::vector<LayerSpec> layers;
    int final_conv_index = -1;  // layer whose (rectified) output is probed

    bool operator==(const ArchitectureSpec&) const = default;

    void validate() const {
        if (input_resolution < 8) throw DomainError("input resolution too small");
        if (layers.size() < 2) throw DomainError("architecture needs layers");
        if (layers[layers.size() - 2].kind != LayerKind::FullyConnected ||
            layers.back().kind != LayerKind::Softmax)
            throw DomainError("architecture must end with FullyConnected then Softmax");
        if (final_conv_index < 0 || final_conv_index >= static_cast<int>(layers.size()) ||
            layers[static_cast<std::size_t>(final_conv_index)].kind != LayerKind::Conv)
            throw DomainError("final_conv_index must point at a Conv layer");
        for (const LayerSpec& l : layers) {
            if (l.kind == LayerKind::Conv && (l.kernel < 1 || l.kernel % 2 == 0 || l.channels < 1 || l.stride < 1))
                throw DomainError("conv layers need odd kernel, positive channels and stride");
            if (l.kind == LayerKind::MaxPool && l.window < 1) throw DomainError("pool window must be positive");
            if (l.kind == LayerKind::FullyConnected && l.out_dim < 1) throw DomainError("fc out_dim must be positive");
        }
        (void)shape_trace();
    }

    // Output shape of every layer, derived from the input resolution.
    std::vector<TensorShape> shape_trace() const {
        std::vector<TensorShape> trace;
        TensorShape cur{1, input_resolution, input_resolution};
        for (const LayerSpec& l : layers) {
            switch (l.kind) {
                case LayerKind::Conv: {
                    const int p = l.kernel / 2;
                    cur.h = (cur.h + 2 * p - l.kernel) / l.stride + 1;
                    cur.w = (cur.w + 2 * p - l.kernel) / l.stride + 1;
                    cur.c = l.channels;
                    if (cur.h < 1 || cur.w < 1) throw DomainError("conv output collapsed to zero size");
                    break;
                }
                case LayerKind::MaxPool:
                    cur.h /= l.window;
                    cur.w /= l.window;
                    if (cur.h < 1 || cur.w < 1) throw DomainError("pool output collapsed to zero size");
                    break;
                case LayerKind::ReLU:
                    break;
                case LayerKind::FullyConnected:
                    cur = TensorShape{l.out_dim, 1, 1};
                    break;
                case LayerKind::Softmax:
                    break;
            }
            trace.push_back(cur);
        }
        return trace;
    }

    // Number of probed units: channels x spatial positions of the final conv layer.
    std::size_t final_conv_unit_count() const {
        return shape_trace()[static_cast<std::size_t>(final_conv_index)].count();
    }

    int output_classes() const { return layers[layers.size() - 2].out_dim; }

    // Parameter array lengths in storage order (weights then biases per
    // parametric layer); fully determined by the architecture.
    std::vector<std::size_t> param_lengths() const {
        std::vector<std::size_t> lens;
        TensorShape cur{1, input_resolution, input_resolution};
        for (const LayerSpec& l : layers) {
            if (l.kind == LayerKind::Conv) {
                lens.push_back(static_cast<std::size_t>(l.channels) * cur.c * l.kernel * l.kernel);
                lens.push_back(static_cast<std::size_t>(l.channels));
            } else if (l.kind == LayerKind::FullyConnected) {
                lens.push_back(static_cast<std::size_t>(l.out_dim) * cur.count());
                lens.push_back(static_cast<std::size_t>(l.out_dim));
            }
            switch (l.kind) {
                case LayerKind::Conv: {
                    const int p = l.kernel / 2;
                    cur = TensorShape{l.channels, (cur.h + 2 * p - l.kernel) / l.stride + 1,
                                      (cur.w + 2 * p - l.kernel) / l.stride + 1};
                    break;
                }
                case LayerKind::MaxPool:
                    cur.h /= l.window;
                    cur.w /= l.window;
                    break;
                case LayerKind::FullyConnected:
                    cur = TensorShape{l.out_dim, 1, 1};
                    break;
                default:
                    break;
            }
        }
        return lens;
    }

    // Desk-scale variant: 4 conv + 2 max-pool + 1 fc. Strided convs keep the
    // probed layer in the low thousands of units while giving its units a
    // near-global receptive field.
    static ArchitectureSpec desk(int classes = 16, int input_resolution = 64) {
        ArchitectureSpec a;
        a.input_resolution = input_resolution;
        a.layers = {
            LayerSpec::conv(3, 16, 2), LayerSpec::relu(),
            LayerSpec::conv(3, 32, 2), LayerSpec::relu(),
            LayerSpec::maxpool(2),
            LayerSpec::conv(3, 32, 2), LayerSpec::relu(),
            LayerSpec::conv(3, 64, 1), LayerSpec::relu(),
            LayerSpec::maxpool(2),
            LayerSpec::fully_connected(classes), LayerSpec::softmax(),
        };
        a.final_conv_index = 7;
        a.validate();
        return a;
    }

    // Full-scale variant: 8 conv + 5 max-pool + 1 fc at 224x224; the probed
    // layer holds 192 x 14 x 14 = 37632 units.
    static ArchitectureSpec full(int classes = 16) {
        ArchitectureSpec a;
        a.input_resolution = 224;
        a.layers = {
            LayerSpec::conv(3, 64, 1),  LayerSpec::relu(), LayerSpec::maxpool(2),
            LayerSpec::conv(3, 96, 1),  LayerSpec::relu(), LayerSpec::maxpool(2),
            LayerSpec::conv(3, 128, 1), LayerSpec::relu(), LayerSpec::maxpool(2),
            LayerSpec::conv(3, 160, 1), LayerSpec::relu(),
            LayerSpec::conv(3, 160, 1), LayerSpec::relu(), LayerSpec::maxpool(2),
            LayerSpec::conv(3, 192, 1), LayerSpec::relu(),
            LayerSpec::conv(3, 192, 1), LayerSpec::relu(),
            LayerSpec::conv(3, 192, 1), LayerSpec::relu(), LayerSpec::maxpool(2),
            LayerSpec::fully_connected(classes), LayerSpec::softmax(),
        };
        a.final_conv_index = 18;
        a.validate();
        return a;
    }
};

struct InitScheme {
    enum class Kind : std::uint8_t { UniformRange = 0, Normal = 1 };
    Kind kind = Kind::UniformRange;
    double lo = -0.1, hi = 0.1;     // UniformRange
    double mean = 0.0, stddev = 0.05;  // Normal

    static InitScheme uniform(double lo, double hi) {
        if (!(lo < hi)) throw DomainError("uniform init needs lo < hi");
        InitScheme s;
        s.kind = Kind::UniformRange;
        s.lo = lo;
        s.hi = hi;
        return s;
    }
    static InitScheme normal(double mean, double stddev) {
        if (!(stddev > 0.0)) throw DomainError("normal init needs stddev > 0");
        InitScheme s;
        s.kind = Kind::Normal;
        s.mean = mean;
        s.stddev = stddev;
        return s;
    }
};

// Nu-Net label set: the 16 numerosity values in ascending order.
struct LabelMap {
    std::vector<int> values;

    static LabelMap numerosity() { return LabelMap{numerosity_levels()}; }
    int size() const { return static_cast<int>(values.size()); }
    bool operator==(const LabelMap&) const = default;
};

struct TrainMeta {
    std::vector<int> labels;       // class values, ascending
    std::string task;              // "untrained", "numerosity", "recognition_proxy"
    std::uint32_t epochs = 0;
    float final_loss = 0.0f;
    float final_acc = 0.0f;
};

struct ModelCheckpoint {
    ArchitectureSpec arch;
    std::vector<std::vector<float>> params;  // weights/biases per parametric layer
    std::uint64_t seed = 0;
    TrainMeta meta;
};

// ---------------------------------------------------------------------------
// Initialization: weights i.i.d. from the scheme, biases zero.
// ---------------------------------------------------------------------------

inline ModelCheckpoint init(const ArchitectureSpec& arch, const InitScheme& scheme, std::uint64_t seed) {
    arch.validate();
    ModelCheckpoint m;
    m.arch = arch;
    m.seed = seed;
    m.meta.task = "untrained";
    Rng rng(seed);
    const auto lens = arch.param_lengths();
    m.params.resize(lens.size());
    for (std::size_t i = 0; i < lens.size(); ++i) {
        m.params[i].assign(lens[i], 0.0f);
        const bool is_bias = (i % 2) == 1;
        if (is_bias) continue;
        for (float& w : m.params[i]) {
            w = static_cast<float>(scheme.kind == InitScheme::Kind::UniformRange
                                       ? rng.uniform(scheme.lo, scheme.hi)
                                       : rng.normal(scheme.mean, scheme.stddev));
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Runtime network + forward/backward.
// ---------------------------------------------------------------------------

template <typename T>
struct ForwardResult {
    std::vector<T> probs;            // softmax class probabilities
    std::vector<T> final_conv;       // rectified final-conv-layer responses
};

template <typename T>
class Network {
public:
    ArchitectureSpec arch;
    std::vector<std::vector<T>> params;

    static Network from_checkpoint(const ModelCheckpoint& c) {
        c.arch.validate();
        const auto lens = c.arch.param_lengths();
        if (c.params.size() != lens.size()) throw FormatError("checkpoint parameter array count mismatch");
        Network n;
        n.arch = c.arch;
        n.params.resize(lens.size());
        for (std::size_t i = 0; i < lens.size(); ++i) {
            if (c.params[i].size() != lens[i]) throw FormatError("checkpoint parameter shape mismatch");
            n.params[i].assign(c.params[i].begin(), c.params[i].end());
        }
        n.prepare_();
        return n;
    }

    std::vector<float> params_as_f32(std::size_t i) const {
        return std::vector<float>(params[i].begin(), params[i].end());
    }

    // Index of the layer whose output is recorded as the unit responses: the
    // ReLU immediately after the final conv when present, else the conv itself.
    int probe_layer() const {
        const int fc = arch.final_conv_index;
        if (fc + 1 < static_cast<int>(arch.layers.size()) &&
            arch.layers[static_cast<std::size_t>(fc + 1)].kind == LayerKind::ReLU)
            return fc + 1;
        return fc;
    }

    std::size_t unit_count() const { return arch.final_conv_unit_count(); }

    // Full forward pass; keeps every intermediate buffer when training.
    struct Cache {
        std::vector<std::vector<T>> acts;      // acts[0] = input, acts[l+1] = layer l output
        std::vector<std::vector<int>> pool_arg;  // argmax source index per pool layer
    };

    void forward_cached(std::span<const T> pixels, Cache& cache) const {
        const std::size_t in_count = static_cast<std::size_t>(arch.input_resolution) * arch.input_resolution;
        if (pixels.size() != in_count)
            throw ShapeMismatch("input has " + std::to_string(pixels.size()) + " pixels, expected " +
                                std::to_string(in_count));
        const std::size_t n = arch.layers.size();
        cache.acts.resize(n + 1);
        cache.pool_arg.assign(n, {});
        cache.acts[0].assign(pixels.begin(), pixels.end());
        TensorShape cur{1, arch.input_resolution, arch.input_resolution};
        for (std::size_t l = 0; l < n; ++l) {
            const LayerSpec& spec = arch.layers[l];
            switch (spec.kind) {
                case LayerKind::Conv: {
                    const TensorShape out = shapes_[l];
                    conv_forward_(spec, cur, cache.acts[l], out, params[pidx_[l]], params[pidx_[l] + 1],
                                  cache.acts[l + 1]);
                    cur = out;
                    break;
                }
                case LayerKind::MaxPool: {
                    const TensorShape out = shapes_[l];
                    pool_forward_(spec, cur, cache.acts[l], out, cache.acts[l + 1], cache.pool_arg[l]);
                    cur = out;
                    break;
                }
                case LayerKind::ReLU: {
                    auto& src = cache.acts[l];
                    auto& dst = cache.acts[l + 1];
                    dst.resize(src.size());
                    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
                    break;
                }
                case LayerKind::FullyConnected: {
                    const auto& w = params[pidx_[l]];
                    const auto& b = params[pidx_[l] + 1];
                    const std::size_t in_n = cache.acts[l].size();
                    auto& dst = cache.acts[l + 1];
                    dst.assign(static_cast<std::size_t>(spec.out_dim), T(0));
                    for (int o = 0; o < spec.out_dim; ++o) {
                        T acc = b[static_cast<std::size_t>(o)];
                        const T* wr = &w[static_cast<std::size_t>(o) * in_n];
                        const T* x = cache.acts[l].data();
                        for (std::size_t i = 0; i < in_n; ++i) acc += wr[i] * x[i];
                        dst[static_cast<std::size_t>(o)] = acc;
                    }
                    cur = shapes_[l];
                    break;
                }
                case LayerKind::Softmax: {
                    cache.acts[l + 1] = softmax_(cache.acts[l]);
                    break;
                }
            }
        }
    }

    ForwardResult<T> forward(std::span<const T> pixels) const {
        Cache cache;
        forward_cached(pixels, cache);
        ForwardResult<T> r;
        r.probs = cache.acts.back();
        r.final_conv = cache.acts[static_cast<std::size_t>(probe_layer()) + 1];
        return r;
    }

    ForwardResult<T> forward(const StimulusImage& img) const {
        if (img.resolution != arch.input_resolution)
            throw ShapeMismatch("image resolution " + std::to_string(img.resolution) +
                                " does not match network input " + std::to_string(arch.input_resolution));
        std::vector<T> px(img.pixels.size());
        for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<T>(img.pixels[i]);
        return forward(std::span<const T>(px));
    }

    // argmax over class probabilities; ties break toward the smaller label.
    int predict_index(std::span<const T> pixels) const {
        const auto r = forward(pixels);
        int best = 0;
        for (int i = 1; i < static_cast<int>(r.probs.size()); ++i)
            if (r.probs[static_cast<std::size_t>(i)] > r.probs[static_cast<std::size_t>(best)]) best = i;
        return best;
    }

    int predict_index(const StimulusImage& img) const {
        if (img.resolution != arch.input_resolution)
            throw ShapeMismatch("image resolution mismatch in predict");
        std::vector<T> px(img.pixels.size());
        for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<T>(img.pixels[i]);
        return predict_index(std::span<const T>(px));
    }

    // Cross-entropy loss of one example (label given as class index).
    double example_loss(std::span<const T> pixels, int label) const {
        Cache cache;
        forward_cached(pixels, cache);
        return nll_(cache.acts[arch.layers.size() - 1], label);
    }

    // Analytic gradients for one example, same array layout as params.
    // Returns the loss; reports the argmax class through `predicted` if given.
    double example_gradients(std::span<const T> pixels, int label, std::vector<std::vector<T>>& grads,
                             int* predicted = nullptr) const {
        Cache cache;
        forward_cached(pixels, cache);
        const std::size_t n = arch.layers.size();
        const auto& logits = cache.acts[n - 1];  // FC output, before softmax
        const double loss = nll_(logits, label);
        if (predicted) {
            int best = 0;
            for (int i = 1; i < static_cast<int>(logits.size()); ++i)
                if (logits[static_cast<std::size_t>(i)] > logits[static_cast<std::size_t>(best)]) best = i;
            *predicted = best;
        }

        if (grads.size() != params.size()) {
            grads.resize(params.size());
            for (std::size_t i = 0; i < params.size(); ++i) grads[i].assign(params[i].size(), T(0));
        }

        // d(loss)/d(logits) = softmax(logits) - onehot(label)
        std::vector<T> delta = softmax_(logits);
        delta[static_cast<std::size_t>(label)] -= T(1);

        // Walk backwards, skipping the softmax layer (folded into the loss).
        for (std::size_t l = n - 1; l-- > 0;) {
            const LayerSpec& spec = arch.layers[l];
            const TensorShape cur_in = (l == 0) ? TensorShape{1, arch.input_resolution, arch.input_resolution}
                                                : shapes_[l - 1];
            switch (spec.kind) {
                case LayerKind::FullyConnected: {
                    const auto& x = cache.acts[l];
                    const auto& w = params[pidx_[l]];
                    auto& gw = grads[pidx_[l]];
                    auto& gb = grads[pidx_[l] + 1];
                    std::vector<T> dx(x.size(), T(0));
                    const std::size_t in_n = x.size();
                    for (int o = 0; o < spec.out_dim; ++o) {
                        const T g = delta[static_cast<std::size_t>(o)];
                        gb[static_cast<std::size_t>(o)] += g;
                        const T* wr = &w[static_cast<std::size_t>(o) * in_n];
                        T* gwr = &gw[static_cast<std::size_t>(o) * in_n];
                        for (std::size_t i = 0; i < in_n; ++i) {
                            gwr[i] += g * x[i];
                            dx[i] += g * wr[i];
                        }
                    }
                    delta = std::move(dx);
                    break;
                }
                case LayerKind::ReLU: {
                    const auto& y = cache.acts[l + 1];
                    for (std::size_t i = 0; i < delta.size(); ++i)
                        if (!(y[i] > T(0))) delta[i] = T(0);
                    break;
                }
                case LayerKind::MaxPool: {
                    std::vector<T> dx(cache.acts[l].size(), T(0));
                    const auto& arg = cache.pool_arg[l];
                    for (std::size_t i = 0; i < delta.size(); ++i)
                        dx[static_cast<std::size_t>(arg[i])] += delta[i];
                    delta = std::move(dx);
                    break;
                }
                case LayerKind::Conv: {
                    std::vector<T> dx(cache.acts[l].size(), T(0));
                    conv_backward_(spec, cur_in, cache.acts[l], shapes_[l], params[pidx_[l]], delta, dx,
                                   grads[pidx_[l]], grads[pidx_[l] + 1]);
                    delta = std::move(dx);
                    break;
                }
                case LayerKind::Softmax:
                    break;
            }
        }
        return loss;
    }

private:
    std::vector<TensorShape> shapes_;  // output shape per layer
    std::vector<int> pidx_;            // first param array index per layer (-1 if none)

    void prepare_() {
        shapes_ = arch.shape_trace();
        pidx_.assign(arch.layers.size(), -1);
        int next = 0;
        for (std::size_t l = 0; l < arch.layers.size(); ++l) {
            const LayerKind k = arch.layers[l].kind;
            if (k == LayerKind::Conv || k == LayerKind::FullyConnected) {
                pidx_[l] = next;
                next += 2;
            }
        }
    }

    static std::vector<T> softmax_(const std::vector<T>& logits) {
        T m = logits[0];
        for (T v : logits) m = std::max(m, v);
        std::vector<T> p(logits.size());
        T sum = T(0);
        for (std::size_t i = 0; i < logits.size(); ++i) {
            p[i] = std::exp(logits[i] - m);
            sum += p[i];
        }
        for (T& v : p) v /= sum;
        return p;
    }

    static double nll_(const std::vector<T>& logits, int label) {
        if (label < 0 || label >= static_cast<int>(logits.size()))
            throw DomainError("label index out of range");
        double m = static_cast<double>(logits[0]);
        for (T v : logits) m = std::max(m, static_cast<double>(v));
        double sum = 0.0;
        for (T v : logits) sum += std::exp(static_cast<double>(v) - m);
        return std::log(sum) + m - static_cast<double>(logits[static_cast<std::size_t>(label)]);
    }

    static void conv_forward_(const LayerSpec& spec, const TensorShape& in, const std::vector<T>& x,
                              const TensorShape& out, const std::vector<T>& w, const std::vector<T>& b,
                              std::vector<T>& y) {
        const int k = spec.kernel, s = spec.stride, p = spec.kernel / 2;
        y.assign(out.count(), T(0));
        for (int oc = 0; oc < out.c; ++oc) {
            T* ybase = &y[static_cast<std::size_t>(oc) * out.h * out.w];
            const T bias = b[static_cast<std::size_t>(oc)];
            for (int i = 0; i < out.h * out.w; ++i) ybase[i] = bias;
            for (int ic = 0; ic < in.c; ++ic) {
                const T* xbase = &x[static_cast<std::size_t>(ic) * in.h * in.w];
                const T* wbase = &w[((static_cast<std::size_t>(oc) * in.c + ic) * k) * k];
                for (int ky = 0; ky < k; ++ky) {
                    for (int oy = 0; oy < out.h; ++oy) {
                        const int iy = oy * s + ky - p;
                        if (iy < 0 || iy >= in.h) continue;
                        const T* xrow = xbase + static_cast<std::size_t>(iy) * in.w;
                        T* yrow = ybase + static_cast<std::size_t>(oy) * out.w;
                        for (int kx = 0; kx < k; ++kx) {
                            const T wv = wbase[static_cast<std::size_t>(ky) * k + kx];
                            int ox0 = 0;
                            while (ox0 * s + kx - p < 0) ++ox0;
                            int ox1 = std::min(out.w - 1, (in.w - 1 + p - kx) / s);
                            const T* xoff = xrow + (static_cast<std::ptrdiff_t>(ox0) * s + kx - p);
                            if (s == 1) {
                                for (int ox = ox0; ox <= ox1; ++ox, ++xoff) yrow[ox] += wv * (*xoff);
                            } else {
                                for (int ox = ox0; ox <= ox1; ++ox, xoff += s) yrow[ox] += wv * (*xoff);
                            }
                        }
                    }
                }
            }
        }
    }

    static void conv_backward_(const LayerSpec& spec, const TensorShape& in, const std::vector<T>& x,
                               const TensorShape& out, const std::vector<T>& w, const std::vector<T>& dy,
                               std::vector<T>& dx, std::vector<T>& gw, std::vector<T>& gb) {
        const int k = spec.kernel, s = spec.stride, p = spec.kernel / 2;
        for (int oc = 0; oc < out.c; ++oc) {
            const T* dybase = &dy[static_cast<std::size_t>(oc) * out.h * out.w];
            T gbacc = T(0);
            for (int i = 0; i < out.h * out.w; ++i) gbacc += dybase[i];
            gb[static_cast<std::size_t>(oc)] += gbacc;
            for (int ic = 0; ic < in.c; ++ic) {
                const T* xbase = &x[static_cast<std::size_t>(ic) * in.h * in.w];
                T* dxbase = &dx[static_cast<std::size_t>(ic) * in.h * in.w];
                const T* wbase = &w[((static_cast<std::size_t>(oc) * in.c + ic) * k) * k];
                T* gwbase = &gw[((static_cast<std::size_t>(oc) * in.c + ic) * k) * k];
                for (int ky = 0; ky < k; ++ky) {
                    for (int oy = 0; oy < out.h; ++oy) {
                        const int iy = oy * s + ky - p;
                        if (iy < 0 || iy >= in.h) continue;
                        const T* xrow = xbase + static_cast<std::size_t>(iy) * in.w;
                        T* dxrow = dxbase + static_cast<std::size_t>(iy) * in.w;
                        const T* dyrow = dybase + static_cast<std::size_t>(oy) * out.w;
                        for (int kx = 0; kx < k; ++kx) {
                            const T wv = wbase[static_cast<std::size_t>(ky) * k + kx];
                            T gwacc = T(0);
                            int ox0 = 0;
                            while (ox0 * s + kx - p < 0) ++ox0;
                            const int ox1 = std::min(out.w - 1, (in.w - 1 + p - kx) / s);
                            int ix = ox0 * s + kx - p;
                            for (int ox = ox0; ox <= ox1; ++ox, ix += s) {
                                const T g = dyrow[ox];
                                dxrow[ix] += wv * g;
                                gwacc += xrow[ix] * g;
                            }
                            gwbase[static_cast<std::size_t>(ky) * k + kx] += gwacc;
                        }
                    }
                }
            }
        }
    }

    static void pool_forward_(const LayerSpec& spec, const TensorShape& in, const std::vector<T>& x,
                              const TensorShape& out, std::vector<T>& y, std::vector<int>& arg) {
        const int win = spec.window;
        y.assign(out.count(), T(0));
        arg.assign(out.count(), 0);
        for (int c = 0; c < in.c; ++c) {
            const T* xbase = &x[static_cast<std::size_t>(c) * in.h * in.w];
            const std::size_t obase = static_cast<std::size_t>(c) * out.h * out.w;
            for (int oy = 0; oy < out.h; ++oy) {
                for (int ox = 0; ox < out.w; ++ox) {
                    T best = -std::numeric_limits<T>::infinity();
                    int best_idx = 0;
                    for (int wy = 0; wy < win; ++wy) {
                        const int iy = oy * win + wy;
                        for (int wx = 0; wx < win; ++wx) {
                            const int ix = ox * win + wx;
                            const T v = xbase[static_cast<std::size_t>(iy) * in.w + ix];
                            if (v > best) {
                                best = v;
                                best_idx = iy * in.w + ix;
                            }
                        }
                    }
                    y[obase + static_cast<std::size_t>(oy) * out.w + ox] = best;
                    arg[obase + static_cast<std::size_t>(oy) * out.w + ox] =
                        c * in.h * in.w + best_idx;
                }
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

struct TrainExample {
    std::vector<float> pixels;
    int label = 0;  // class index
};

struct Hyper {
    double learning_rate = 0.01;
    double momentum = 0.9;
    int batch_size = 32;
    int epochs = 60;
    int lr_halve_every = 20;  // epochs; 0 disables the schedule
    std::uint64_t seed = 1;
};

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

struct TrainResult {
    ModelCheckpoint checkpoint;
    std::vector<EpochStats> history;
};

inline std::vector<TrainExample> to_examples(const Dataset& data) {
    std::vector<TrainExample> ex(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        ex[i].pixels.resize(data[i].image.pixels.size());
        for (std::size_t j = 0; j < ex[i].pixels.size(); ++j)
            ex[i].pixels[j] = static_cast<float>(data[i].image.pixels[j]);
        ex[i].label = data[i].level_index;
    }
    return ex;
}

inline std::vector<TrainExample> to_examples(const std::vector<ProxyItem>& data) {
    std::vector<TrainExample> ex(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        ex[i].pixels.resize(data[i].image.pixels.size());
        for (std::size_t j = 0; j < ex[i].pixels.size(); ++j)
            ex[i].pixels[j] = static_cast<float>(data[i].image.pixels[j]);
        ex[i].label = data[i].label;
    }
    return ex;
}

// Plain SGD with momentum. Per-example gradients within a batch are computed
// in parallel into per-slot buffers and reduced in example order, so the
// result does not depend on the worker count.
inline TrainResult train(const ModelCheckpoint& start, const std::vector<TrainExample>& data,
                         const Hyper& hyper, const std::string& task_name = "numerosity") {
    if (data.empty()) throw DomainError("training set is empty");
    if (hyper.batch_size < 1 || hyper.batch_size > static_cast<int>(data.size()))
        throw DomainError("batch size must be in [1, dataset size]");
    auto net = Network<float>::from_checkpoint(start);
    const int classes = net.arch.output_classes();
    for (const TrainExample& e : data)
        if (e.label < 0 || e.label >= classes) throw DomainError("training label outside the label map");

    std::vector<std::vector<float>> velocity(net.params.size());
    for (std::size_t i = 0; i < net.params.size(); ++i) velocity[i].assign(net.params[i].size(), 0.0f);

    const std::size_t bs = static_cast<std::size_t>(hyper.batch_size);
    std::vector<std::vector<std::vector<float>>> slot_grads(bs);
    std::vector<double> slot_loss(bs, 0.0);
    std::vector<int> slot_correct(bs, 0);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(hyper.seed);

    TrainResult result;
    result.history.reserve(static_cast<std::size_t>(hyper.epochs));

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        double lr = hyper.learning_rate;
        if (hyper.lr_halve_every > 0)
            lr *= std::pow(0.5, static_cast<double>(epoch / hyper.lr_halve_every));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t correct = 0;
        for (std::size_t base = 0; base < order.size(); base += bs) {
            const std::size_t cur = std::min(bs, order.size() - base);
            parallel_for(cur, [&](std::size_t slot) {
                auto& g = slot_grads[slot];
                if (g.size() != net.params.size()) {
                    g.resize(net.params.size());
                    for (std::size_t i = 0; i < net.params.size(); ++i) g[i].assign(net.params[i].size(), 0.0f);
                } else {
                    for (auto& arr : g) std::fill(arr.begin(), arr.end(), 0.0f);
                }
                const TrainExample& e = data[order[base + slot]];
                int predicted = -1;
                slot_loss[slot] = net.example_gradients(std::span<const float>(e.pixels), e.label, g, &predicted);
                slot_correct[slot] = (predicted == e.label) ? 1 : 0;
            });
            // Reduce in slot order (deterministic), then update.
            const float scale = 1.0f / static_cast<float>(cur);
            for (std::size_t i = 0; i < net.params.size(); ++i) {
                auto& v = velocity[i];
                auto& w = net.params[i];
                for (std::size_t j = 0; j < w.size(); ++j) {
                    float g = 0.0f;
                    for (std::size_t slot = 0; slot < cur; ++slot) g += slot_grads[slot][i][j];
                    g *= scale;
                    v[j] = static_cast<float>(hyper.momentum) * v[j] - static_cast<float>(lr) * g;
                    w[j] += v[j];
                }
            }
            for (std::size_t slot = 0; slot < cur; ++slot) {
                epoch_loss += slot_loss[slot];
                correct += static_cast<std::size_t>(slot_correct[slot]);
            }
        }
        epoch_loss /= static_cast<double>(data.size());
        if (!std::isfinite(epoch_loss))
            throw DivergenceError("loss became non-finite at epoch " + std::to_string(epoch));
        result.history.push_back({epoch_loss, static_cast<double>(correct) / static_cast<double>(data.size())});
    }

    result.checkpoint.arch = net.arch;
    result.checkpoint.seed = hyper.seed;
    result.checkpoint.params.resize(net.params.size());
    for (std::size_t i = 0; i < net.params.size(); ++i) result.checkpoint.params[i] = net.params_as_f32(i);
    result.checkpoint.meta.task = task_name;
    result.checkpoint.meta.labels = start.meta.labels;
    result.checkpoint.meta.epochs = static_cast<std::uint32_t>(hyper.epochs);
    if (!result.history.empty()) {
        result.checkpoint.meta.final_loss = static_cast<float>(result.history.back().loss);
        result.checkpoint.meta.final_acc = static_cast<float>(result.history.back().accuracy);
    }
    return result;
}

// The recognition proxy uses the identical training loop on a non-numerosity
// objective; the label set must be disjoint from the numerosity labels.
inline TrainResult train_recognition_proxy(const ModelCheckpoint& start, const std::vector<ProxyItem>& proxy,
                                           const Hyper& hyper) {
    if (start.arch.output_classes() < kProxyClassCount)
        throw DomainError("proxy network needs at least " + std::to_string(kProxyClassCount) + " classes");
    return train(start, to_examples(proxy), hyper, "recognition_proxy");
}

// ---------------------------------------------------------------------------
// Checkpoint file format (little endian):
//   "NUMPROBE1" | u32 version | architecture block | u64 seed | metadata |
//   u32 array count | per array: u64 length + f32 payload
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[9] = {'N', 'U', 'M', 'P', 'R', 'O', 'B', 'E', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<std::uint8_t> serialize_checkpoint(const ModelCheckpoint& m) {
    m.arch.validate();
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + sizeof(kCheckpointMagic));
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(m.arch.input_resolution));
    put_u32(out, static_cast<std::uint32_t>(m.arch.layers.size()));
    for (const LayerSpec& l : m.arch.layers) {
        out.push_back(static_cast<std::uint8_t>(l.kind));
        switch (l.kind) {
            case LayerKind::Conv:
                put_u32(out, static_cast<std::uint32_t>(l.kernel));
                put_u32(out, static_cast<std::uint32_t>(l.channels));
                put_u32(out, static_cast<std::uint32_t>(l.stride));
                break;
            case LayerKind::MaxPool:
                put_u32(out, static_cast<std::uint32_t>(l.window));
                break;
            case LayerKind::FullyConnected:
                put_u32(out, static_cast<std::uint32_t>(l.out_dim));
                break;
            default:
                break;
        }
    }
    put_u32(out, static_cast<std::uint32_t>(m.arch.final_conv_index));
    put_u64(out, m.seed);
    put_u32(out, static_cast<std::uint32_t>(m.meta.labels.size()));
    for (int v : m.meta.labels) put_u32(out, static_cast<std::uint32_t>(v));
    put_u32(out, m.meta.epochs);
    put_f32(out, m.meta.final_loss);
    put_f32(out, m.meta.final_acc);
    put_u32(out, static_cast<std::uint32_t>(m.meta.task.size()));
    out.insert(out.end(), m.meta.task.begin(), m.meta.task.end());
    put_u32(out, static_cast<std::uint32_t>(m.params.size()));
    for (const auto& arr : m.params) {
        put_u64(out, arr.size());
        for (float v : arr) put_f32(out, v);
    }
    return out;
}

inline ModelCheckpoint deserialize_checkpoint(const std::uint8_t* data, std::size_t size) {
    ByteReader r(data, size);
    char magic[sizeof(kCheckpointMagic)];
    r.read_raw(magic, sizeof(magic));
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw FormatError("bad magic: not a checkpoint file");
    const std::uint32_t version = r.get_u32();
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
    ModelCheckpoint m;
    m.arch.input_resolution = static_cast<int>(r.get_u32());
    const std::uint32_t n_layers = r.get_u32();
    if (n_layers > 1024) throw FormatError("implausible layer count");
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        std::uint8_t kind;
        r.read_raw(&kind, 1);
        if (kind > static_cast<std::uint8_t>(LayerKind::Softmax)) throw FormatError("unknown layer kind");
        LayerSpec l;
        l.kind = static_cast<LayerKind>(kind);
        switch (l.kind) {
            case LayerKind::Conv:
                l.kernel = static_cast<int>(r.get_u32());
                l.channels = static_cast<int>(r.get_u32());
                l.stride = static_cast<int>(r.get_u32());
                break;
            case LayerKind::MaxPool:
                l.window = static_cast<int>(r.get_u32());
                break;
            case LayerKind::FullyConnected:
                l.out_dim = static_cast<int>(r.get_u32());
                break;
            default:
                break;
        }
        m.arch.layers.push_back(l);
    }
    m.arch.final_conv_index = static_cast<int>(r.get_u32());
    m.arch.validate();
    m.seed = r.get_u64();
    const std::uint32_t n_labels = r.get_u32();
    if (n_labels > 4096) throw FormatError("implausible label count");
    for (std::uint32_t i = 0; i < n_labels; ++i) m.meta.labels.push_back(static_cast<int>(r.get_u32()));
    m.meta.epochs = r.get_u32();
    m.meta.final_loss = r.get_f32();
    m.meta.final_acc = r.get_f32();
    const std::uint32_t task_len = r.get_u32();
    if (task_len > 4096) throw FormatError("implausible task name length");
    m.meta.task.resize(task_len);
    if (task_len) r.read_raw(m.meta.task.data(), task_len);
    const std::uint32_t n_arrays = r.get_u32();
    const auto lens = m.arch.param_lengths();
    if (n_arrays != lens.size())
        throw FormatError("parameter array count " + std::to_string(n_arrays) + " does not match architecture");
    m.params.resize(n_arrays);
    for (std::uint32_t i = 0; i < n_arrays; ++i) {
        const std::uint64_t len = r.get_u64();
        if (len != lens[i])
            throw FormatError("parameter array " + std::to_string(i) + " has length " + std::to_string(len) +
                              ", architecture requires " + std::to_string(lens[i]));
        m.params[i].resize(len);
        for (std::uint64_t j = 0; j < len; ++j) m.params[i][j] = r.get_f32();
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint payload");
    return m;
}

inline void save_checkpoint(const ModelCheckpoint& m, const std::string& path) {
    const auto bytes = serialize_checkpoint(m);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("write failed: " + path);
}

inline ModelCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes.data(), bytes.size());
}

}  // namespace numprobe
