// Shared infrastructure: typed errors, deterministic RNG, seed derivation,
// byte-level serialization helpers, content hashing, and a small parallel map.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <bit>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace numprobe {

inline constexpr const char* kToolkitVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Typed errors. Each named failure mode in the module contracts gets its own
// exception type so callers (and tests) can catch them individually.
// ---------------------------------------------------------------------------

#define NUMPROBE_DEFINE_ERROR(Name)                          \
    struct Name : std::runtime_error {                       \
        explicit Name(const std::string& msg)                \
            : std::runtime_error(std::string(#Name ": ") + msg) {} \
    }

NUMPROBE_DEFINE_ERROR(PlacementFailure);
NUMPROBE_DEFINE_ERROR(InfeasibleConstraint);
NUMPROBE_DEFINE_ERROR(ShapeMismatch);
NUMPROBE_DEFINE_ERROR(DivergenceError);
NUMPROBE_DEFINE_ERROR(FormatError);
NUMPROBE_DEFINE_ERROR(UnbalancedDesign);
NUMPROBE_DEFINE_ERROR(InsufficientReplicates);
NUMPROBE_DEFINE_ERROR(DomainError);
NUMPROBE_DEFINE_ERROR(InsufficientSamples);
NUMPROBE_DEFINE_ERROR(Unsatisfiable);
NUMPROBE_DEFINE_ERROR(MissingArtifacts);
NUMPROBE_DEFINE_ERROR(NoSelectiveUnits);

#undef NUMPROBE_DEFINE_ERROR

// ---------------------------------------------------------------------------
// RNG. mt19937_64 is bit-exact across platforms, but the std distribution
// adaptors are not, so all value derivation is done by hand here.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives a child seed from a parent seed and an ordered tuple of indices.
// Used to give every stimulus its own independent random stream.
inline std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> parts) {
    std::uint64_t s = parent ^ 0x2545f4914f6cdd1dULL;
    for (std::uint64_t p : parts) {
        s ^= splitmix64(p) + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
        (void)splitmix64(s);
    }
    std::uint64_t st = s;
    return splitmix64(st);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) throw DomainError("uniform_index: n must be positive");
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do { x = gen_(); } while (x >= limit);
        return x % n;
    }

    // Box-Muller with a cached spare.
    double normal(double mean, double stddev) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1, u2;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return mean + stddev * r * std::cos(a);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Little-endian byte serialization (checkpoint files, canonical scene bytes).
// ---------------------------------------------------------------------------

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

// Bounds-checked reader over a byte buffer. Running past the end means the
// file is truncated, which is a format error by contract.
class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::size_t remaining() const { return size_ - pos_; }

    void read_raw(void* dst, std::size_t n) {
        if (pos_ + n > size_) throw FormatError("truncated input: need " + std::to_string(n) +
                                                " bytes at offset " + std::to_string(pos_));
        std::memcpy(dst, data_ + pos_, n);
        pos_ += n;
    }

    std::uint32_t get_u32() {
        std::uint8_t b[4];
        read_raw(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    std::uint64_t get_u64() {
        std::uint64_t v = 0;
        std::uint8_t b[8];
        read_raw(b, 8);
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }

    float get_f32() { return std::bit_cast<float>(get_u32()); }
    double get_f64() { return std::bit_cast<double>(get_u64()); }

private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Content hashing for run manifests (FNV-1a, 64-bit).
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Parallel map over an index range. Work items must be independent; callers
// get determinism by writing to disjoint output slots, so the reduction order
// never depends on the thread count.
// ---------------------------------------------------------------------------

inline unsigned worker_count() {
    if (const char* env = std::getenv("NUMPROBE_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return static_cast<unsigned>(n);
    }
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
}

template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    const unsigned workers = std::min<std::size_t>(worker_count(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            for (std::size_t i = w; i < count; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace numprobe
