// Controlled number-depicting stimulus synthesis: three stimulus families
// (random dots; equal total area at equal density; mixed shapes under an
// equal convex hull), deterministic seeding, rasterization, and dataset
// assembly with balanced (numerosity x set) cells.
#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "numprobe/common.hpp"
#include "numprobe/geometry.hpp"

namespace numprobe {

// The 16 presented numerosities: 1, then the even numbers up to 30.
inline const std::vector<int>& numerosity_levels() {
    static const std::vector<int> levels = {1, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26, 28, 30};
    return levels;
}

inline constexpr int kLevelCount = 16;

inline int level_index(int value) {
    const auto& lv = numerosity_levels();
    for (int i = 0; i < kLevelCount; ++i)
        if (lv[static_cast<std::size_t>(i)] == value) return i;
    throw DomainError("not a valid numerosity level: " + std::to_string(value));
}

enum class StimulusSetKind : std::uint8_t { Standard = 0, ControlAreaDensity = 1, ControlShapeHull = 2 };

inline constexpr int kSetCount = 3;

inline const char* set_kind_name(StimulusSetKind k) {
    switch (k) {
        case StimulusSetKind::Standard: return "standard";
        case StimulusSetKind::ControlAreaDensity: return "control_area_density";
        case StimulusSetKind::ControlShapeHull: return "control_shape_hull";
    }
    return "?";
}

struct GenerationParams {
    int resolution = 64;             // raster side in pixels, >= 32
    double radius_mean = 0.06;       // field units
    double radius_halfrange = 0.025; // field units
    double variation_scale = 1.0;    // 1.0 = training distribution, 1.5 = widened sizes
    double gap_min = 0.01;           // minimum boundary gap between objects
    double a_total = 0.022;          // target total object area, equal-area set
    double h_total = 0.18;           // target convex hull area, shape set
    int max_rejection_attempts = 200; // per-object placement attempts

    void validate() const {
        if (resolution < 32) throw DomainError("resolution must be >= 32");
        if (variation_scale < 1.0) throw DomainError("variation_scale must be >= 1.0");
        if (radius_mean - variation_scale * radius_halfrange <= 0.0)
            throw DomainError("radius_mean - variation_scale*radius_halfrange must be positive");
        if (gap_min < 0.0 || a_total <= 0.0 || h_total <= 0.0 || max_rejection_attempts < 1)
            throw DomainError("invalid generation parameters");
    }

    // Smallest admissible object circumradius: guarantees that any object
    // covers at least one pixel center at this resolution.
    double min_object_size() const { return std::max(0.012, 0.75 / resolution); }
};

// Placement-disc area per object for the equal-density set. The disc holding
// the dot centers has area n * kDensityAreaPerObject, so objects-per-area is
// the same at every numerosity. Sized so that the n=30 disc still fits the
// field and the n=2 case remains solvable by rejection sampling.
inline constexpr double kDensityAreaPerObject = 0.010;

inline double density_placement_disc_radius(int n) {
    return std::sqrt(n * kDensityAreaPerObject / 3.14159265358979323846);
}

// Fraction of the hull target that the summed object footprint may occupy in
// the shape set; keeps high numerosities packable inside the hull.
inline constexpr double kHullFillFraction = 0.12;

inline constexpr int kMaxDisplayRestarts = 50;

// A symbolic scene: what was placed where. Rasterization is separate.
struct DotDisplay {
    int numerosity = 1;
    StimulusSetKind set_kind = StimulusSetKind::Standard;
    std::vector<SceneObject> objects;
    std::uint64_t seed = 0;
    bool hull_constraint_skipped = false;  // shape set at n in {1,2}
};

struct StimulusImage {
    int resolution = 0;
    std::vector<std::uint8_t> pixels;  // row-major, 1 = foreground
    // Provenance of the generating scene.
    std::uint64_t seed = 0;
    int numerosity = 0;
    StimulusSetKind set_kind = StimulusSetKind::Standard;
};

// Canonical byte encoding of a display; regeneration from the same seed must
// reproduce these bytes exactly.
inline std::vector<std::uint8_t> serialize_display(const DotDisplay& d) {
    std::vector<std::uint8_t> out;
    put_u64(out, d.seed);
    out.push_back(static_cast<std::uint8_t>(d.set_kind));
    put_u32(out, static_cast<std::uint32_t>(d.numerosity));
    out.push_back(d.hull_constraint_skipped ? 1 : 0);
    put_u32(out, static_cast<std::uint32_t>(d.objects.size()));
    for (const SceneObject& o : d.objects) {
        out.push_back(static_cast<std::uint8_t>(o.shape));
        put_f64(out, o.center.x);
        put_f64(out, o.center.y);
        put_f64(out, o.size);
        put_f64(out, o.aspect);
        put_f64(out, o.orientation);
    }
    return out;
}

inline std::vector<Vec2> display_boundary_points(const DotDisplay& d) {
    std::vector<Vec2> pts;
    pts.reserve(d.objects.size() * 32);
    for (const SceneObject& o : d.objects) append_boundary_points(o, pts);
    return pts;
}

inline double display_total_area(const DotDisplay& d) {
    double a = 0.0;
    for (const SceneObject& o : d.objects) a += object_area(o);
    return a;
}

inline double display_hull_area(const DotDisplay& d) {
    if (d.objects.empty()) return 0.0;
    return convex_hull_area(display_boundary_points(d));
}

namespace detail {

inline bool object_contained(const SceneObject& o) {
    Vec2 lo, hi;
    object_aabb(o, lo, hi);
    return lo.x >= 0.0 && lo.y >= 0.0 && hi.x <= 1.0 && hi.y <= 1.0;
}

// Conservative separation test via circumradii; guarantees the actual
// boundary gap is at least gap_min.
inline bool separated(const SceneObject& a, const SceneObject& b, double gap_min) {
    const Vec2 d = a.center - b.center;
    const double need = a.size + b.size + gap_min;
    return dot(d, d) >= need * need;
}

inline bool placement_ok(const std::vector<SceneObject>& placed, const SceneObject& cand, double gap_min) {
    if (!object_contained(cand)) return false;
    for (const SceneObject& p : placed) {
        if (!separated(p, cand, gap_min)) return false;
    }
    return true;
}

inline double draw_radius(Rng& rng, const GenerationParams& p) {
    const double half = p.variation_scale * p.radius_halfrange;
    return std::max(p.min_object_size(), rng.uniform(p.radius_mean - half, p.radius_mean + half));
}

inline Vec2 point_in_disc(Rng& rng, Vec2 center, double radius) {
    const double r = radius * std::sqrt(rng.uniform());
    const double a = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    return center + Vec2{r * std::cos(a), r * std::sin(a)};
}

inline SceneObject sample_shape_object(Rng& rng, const GenerationParams& p, double size_scale) {
    SceneObject o;
    o.shape = static_cast<ShapeKind>(rng.uniform_index(kShapeKindCount));
    o.size = std::max(p.min_object_size(), draw_radius(rng, p) * size_scale);
    if (o.shape == ShapeKind::Ellipse || o.shape == ShapeKind::Rectangle)
        o.aspect = rng.uniform(1.3, 2.2);
    o.orientation = rng.uniform(0.0, 3.14159265358979323846);
    return o;
}

}  // namespace detail

// Standard set: n circles of random size and position.
inline DotDisplay gen_standard(int n, const GenerationParams& params, std::uint64_t seed) {
    params.validate();
    (void)level_index(n);
    Rng rng(seed);
    for (int restart = 0; restart < kMaxDisplayRestarts; ++restart) {
        std::vector<double> radii(static_cast<std::size_t>(n));
        for (double& r : radii) r = detail::draw_radius(rng, params);
        // Largest first: dramatically improves packing feasibility.
        std::sort(radii.begin(), radii.end(), std::greater<double>());
        std::vector<SceneObject> placed;
        placed.reserve(static_cast<std::size_t>(n));
        bool ok = true;
        for (double r : radii) {
            SceneObject o;
            o.size = r;
            bool found = false;
            for (int attempt = 0; attempt < params.max_rejection_attempts; ++attempt) {
                o.center = {rng.uniform(r, 1.0 - r), rng.uniform(r, 1.0 - r)};
                if (detail::placement_ok(placed, o, params.gap_min)) {
                    found = true;
                    break;
                }
            }
            if (!found) {
                ok = false;
                break;
            }
            placed.push_back(o);
        }
        if (ok) {
            DotDisplay d;
            d.numerosity = n;
            d.set_kind = StimulusSetKind::Standard;
            d.objects = std::move(placed);
            d.seed = seed;
            return d;
        }
    }
    throw PlacementFailure("standard set: n=" + std::to_string(n) + ", seed=" + std::to_string(seed));
}

// Control set 1: equal total dot area and equal dot density. All dots share
// the radius sqrt(a_total / (n*pi)); their centers are confined to a centered
// disc of area n * kDensityAreaPerObject.
inline DotDisplay gen_control_area_density(int n, const GenerationParams& params, std::uint64_t seed) {
    params.validate();
    (void)level_index(n);
    constexpr double kPi = 3.14159265358979323846;
    const double r = std::sqrt(params.a_total / (n * kPi));
    const double disc_r = density_placement_disc_radius(n);
    const Vec2 field_center{0.5, 0.5};
    if (disc_r + r > 0.5)
        throw InfeasibleConstraint("equal-area dot spills outside the field at n=" + std::to_string(n));
    if (n >= 2 && 2.0 * r + params.gap_min > 2.0 * disc_r)
        throw InfeasibleConstraint("equal radius violates gap_min inside the placement disc at n=" +
                                   std::to_string(n));
    Rng rng(seed);
    for (int restart = 0; restart < kMaxDisplayRestarts; ++restart) {
        std::vector<SceneObject> placed;
        placed.reserve(static_cast<std::size_t>(n));
        bool ok = true;
        for (int i = 0; i < n; ++i) {
            SceneObject o;
            o.size = r;
            bool found = false;
            for (int attempt = 0; attempt < params.max_rejection_attempts; ++attempt) {
                o.center = detail::point_in_disc(rng, field_center, disc_r);
                if (detail::placement_ok(placed, o, params.gap_min)) {
                    found = true;
                    break;
                }
            }
            if (!found) {
                ok = false;
                break;
            }
            placed.push_back(o);
        }
        if (ok) {
            DotDisplay d;
            d.numerosity = n;
            d.set_kind = StimulusSetKind::ControlAreaDensity;
            d.objects = std::move(placed);
            d.seed = seed;
            return d;
        }
    }
    throw PlacementFailure("equal-area set: n=" + std::to_string(n) + ", seed=" + std::to_string(seed));
}

// Control set 2: mixed geometric shapes whose joint convex hull matches
// h_total. Objects are first placed inside a disc sized slightly below the
// target, then the center configuration is rescaled about its centroid until
// the hull area lands within tolerance; overlap is re-validated afterwards.
// The hull constraint is skipped for n in {1,2}, where the hull degenerates.
inline DotDisplay gen_control_shape_hull(int n, const GenerationParams& params, std::uint64_t seed) {
    params.validate();
    (void)level_index(n);
    constexpr double kPi = 3.14159265358979323846;
    const double mean_area = kPi * params.radius_mean * params.radius_mean;
    const double size_scale = std::min(1.0, std::sqrt(kHullFillFraction * params.h_total / (n * mean_area)));
    Rng rng(seed);

    if (n <= 2) {
        // Degenerate hull: free placement, flagged in provenance.
        for (int restart = 0; restart < kMaxDisplayRestarts; ++restart) {
            std::vector<SceneObject> placed;
            bool ok = true;
            for (int i = 0; i < n; ++i) {
                SceneObject o = detail::sample_shape_object(rng, params, size_scale);
                bool found = false;
                for (int attempt = 0; attempt < params.max_rejection_attempts; ++attempt) {
                    o.center = {rng.uniform(o.size, 1.0 - o.size), rng.uniform(o.size, 1.0 - o.size)};
                    if (detail::placement_ok(placed, o, params.gap_min)) {
                        found = true;
                        break;
                    }
                }
                if (!found) {
                    ok = false;
                    break;
                }
                placed.push_back(o);
            }
            if (ok) {
                DotDisplay d;
                d.numerosity = n;
                d.set_kind = StimulusSetKind::ControlShapeHull;
                d.objects = std::move(placed);
                d.seed = seed;
                d.hull_constraint_skipped = true;
                return d;
            }
        }
        throw PlacementFailure("shape set: n=" + std::to_string(n) + ", seed=" + std::to_string(seed));
    }

    const Vec2 field_center{0.5, 0.5};
    for (int restart = 0; restart < kMaxDisplayRestarts; ++restart) {
        std::vector<SceneObject> objects;
        objects.reserve(static_cast<std::size_t>(n));
        double mean_size = 0.0;
        for (int i = 0; i < n; ++i) {
            objects.push_back(detail::sample_shape_object(rng, params, size_scale));
            mean_size += objects.back().size;
        }
        mean_size /= n;
        std::sort(objects.begin(), objects.end(),
                  [](const SceneObject& a, const SceneObject& b) { return a.size > b.size; });
        // Start disc: slightly below the hull target, widened if needed so the
        // center packing stays below ~30% (the later inward rescale has the
        // placement padding as headroom).
        const double excl = mean_size + 0.5 * params.gap_min;
        const double start_disc = std::max(0.8 * std::sqrt(params.h_total / kPi),
                                           excl * std::sqrt(n / 0.30));
        const double pad = 1.2;
        std::vector<SceneObject> placed;
        placed.reserve(static_cast<std::size_t>(n));
        bool ok = true;
        for (SceneObject o : objects) {
            bool found = false;
            const double placement_gap = pad * params.gap_min + (pad - 1.0) * 2.0 * mean_size;
            for (int attempt = 0; attempt < params.max_rejection_attempts; ++attempt) {
                o.center = detail::point_in_disc(rng, field_center, start_disc);
                if (detail::placement_ok(placed, o, placement_gap)) {
                    found = true;
                    break;
                }
            }
            if (!found) {
                ok = false;
                break;
            }
            placed.push_back(o);
        }
        if (!ok) continue;

        DotDisplay d;
        d.numerosity = n;
        d.set_kind = StimulusSetKind::ControlShapeHull;
        d.objects = std::move(placed);
        d.seed = seed;

        bool converged = false;
        for (int iter = 0; iter < 100; ++iter) {
            const double area = display_hull_area(d);
            if (std::abs(area - params.h_total) <= 0.02 * params.h_total) {
                converged = true;
                break;
            }
            Vec2 centroid{0.0, 0.0};
            for (const SceneObject& o : d.objects) centroid = centroid + o.center;
            centroid = (1.0 / n) * centroid;
            // Damped multiplicative step; the hull grows roughly quadratically
            // in the center spread, so sqrt of the area ratio is the natural scale.
            const double factor = std::clamp(std::sqrt(params.h_total / area), 0.6, 1.6);
            for (SceneObject& o : d.objects) o.center = centroid + factor * (o.center - centroid);
        }
        if (!converged) continue;

        bool valid = true;
        for (std::size_t i = 0; i < d.objects.size() && valid; ++i) {
            if (!detail::object_contained(d.objects[i])) valid = false;
            for (std::size_t j = i + 1; j < d.objects.size() && valid; ++j)
                if (!detail::separated(d.objects[i], d.objects[j], params.gap_min)) valid = false;
        }
        const double final_area = display_hull_area(d);
        if (std::abs(final_area - params.h_total) > 0.05 * params.h_total) valid = false;
        if (valid) return d;
    }
    throw InfeasibleConstraint("hull target unreachable: n=" + std::to_string(n) +
                               ", seed=" + std::to_string(seed));
}

inline DotDisplay gen_display(StimulusSetKind kind, int n, const GenerationParams& params, std::uint64_t seed) {
    switch (kind) {
        case StimulusSetKind::Standard: return gen_standard(n, params, seed);
        case StimulusSetKind::ControlAreaDensity: return gen_control_area_density(n, params, seed);
        case StimulusSetKind::ControlShapeHull: return gen_control_shape_hull(n, params, seed);
    }
    throw DomainError("unknown stimulus set");
}

// Binary rasterization: a pixel is foreground iff its center lies inside any
// object.
inline StimulusImage rasterize(const DotDisplay& display, int resolution) {
    if (resolution < 32) throw DomainError("rasterize: resolution must be >= 32");
    StimulusImage img;
    img.resolution = resolution;
    img.pixels.assign(static_cast<std::size_t>(resolution) * resolution, 0);
    img.seed = display.seed;
    img.numerosity = display.numerosity;
    img.set_kind = display.set_kind;
    const double inv = 1.0 / resolution;
    for (const SceneObject& o : display.objects) {
        Vec2 lo, hi;
        object_aabb(o, lo, hi);
        const int x0 = std::max(0, static_cast<int>(std::floor(lo.x * resolution - 0.5)));
        const int x1 = std::min(resolution - 1, static_cast<int>(std::ceil(hi.x * resolution)));
        const int y0 = std::max(0, static_cast<int>(std::floor(lo.y * resolution - 0.5)));
        const int y1 = std::min(resolution - 1, static_cast<int>(std::ceil(hi.y * resolution)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                if (img.pixels[static_cast<std::size_t>(y) * resolution + x]) continue;
                const Vec2 p{(x + 0.5) * inv, (y + 0.5) * inv};
                if (point_in_object(o, p))
                    img.pixels[static_cast<std::size_t>(y) * resolution + x] = 1;
            }
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// Balanced datasets.
// ---------------------------------------------------------------------------

struct DatasetItem {
    StimulusImage image;
    int level_index = 0;  // index into numerosity_levels()
    StimulusSetKind set_kind = StimulusSetKind::Standard;
    int replicate = 0;
};

using Dataset = std::vector<DatasetItem>;

// Generates per_cell images for every (numerosity, set) combination. Each
// image gets its own seed derived from (master_seed, level, set, replicate),
// so items are independent and the whole set is reproducible.
inline Dataset gen_dataset(int per_cell, const GenerationParams& params, std::uint64_t master_seed) {
    if (per_cell < 1) throw DomainError("per_cell must be >= 1");
    params.validate();
    const std::size_t total = static_cast<std::size_t>(per_cell) * kLevelCount * kSetCount;
    Dataset items(total);
    std::vector<std::string> errors(total);
    parallel_for(total, [&](std::size_t idx) {
        const int rep = static_cast<int>(idx % per_cell);
        const int set = static_cast<int>((idx / per_cell) % kSetCount);
        const int lvl = static_cast<int>(idx / (static_cast<std::size_t>(per_cell) * kSetCount));
        const int n = numerosity_levels()[static_cast<std::size_t>(lvl)];
        const auto kind = static_cast<StimulusSetKind>(set);
        const std::uint64_t seed = derive_seed(master_seed, {static_cast<std::uint64_t>(lvl),
                                                             static_cast<std::uint64_t>(set),
                                                             static_cast<std::uint64_t>(rep)});
        try {
            DotDisplay d = gen_display(kind, n, params, seed);
            items[idx] = {rasterize(d, params.resolution), lvl, kind, rep};
        } catch (const std::exception& e) {
            errors[idx] = std::string(e.what()) + " [cell n=" + std::to_string(n) + " set=" +
                          set_kind_name(kind) + " replicate=" + std::to_string(rep) + "]";
        }
    });
    for (const std::string& e : errors)
        if (!e.empty()) throw PlacementFailure(e);
    return items;
}

// ---------------------------------------------------------------------------
// Proxy recognition task: 10 classes = 5 shapes x 2 size regimes. A stand-in
// objective that is unrelated to the numerosity labels.
// ---------------------------------------------------------------------------

inline constexpr int kProxyClassCount = 10;

struct ProxyItem {
    StimulusImage image;
    int label = 0;  // shape * 2 + size regime
};

inline std::vector<ProxyItem> gen_proxy_dataset(int per_class, const GenerationParams& params,
                                                std::uint64_t master_seed) {
    if (per_class < 1) throw DomainError("per_class must be >= 1");
    params.validate();
    const std::size_t total = static_cast<std::size_t>(per_class) * kProxyClassCount;
    std::vector<ProxyItem> items(total);
    std::vector<std::string> errors(total);
    parallel_for(total, [&](std::size_t idx) {
        const int label = static_cast<int>(idx / per_class);
        const int shape = label / 2;
        const bool large = (label % 2) != 0;
        const std::uint64_t seed = derive_seed(master_seed, {0xABCDu, static_cast<std::uint64_t>(label),
                                                             idx % static_cast<std::size_t>(per_class)});
        Rng rng(seed);
        const int count = 3 + static_cast<int>(rng.uniform_index(4));
        std::vector<SceneObject> placed;
        bool ok = false;
        for (int restart = 0; restart < kMaxDisplayRestarts && !ok; ++restart) {
            placed.clear();
            ok = true;
            for (int i = 0; i < count; ++i) {
                SceneObject o;
                o.shape = static_cast<ShapeKind>(shape);
                o.size = large ? rng.uniform(0.065, 0.090) : rng.uniform(0.030, 0.055);
                if (o.shape == ShapeKind::Ellipse || o.shape == ShapeKind::Rectangle)
                    o.aspect = rng.uniform(1.3, 2.2);
                o.orientation = rng.uniform(0.0, 3.14159265358979323846);
                bool found = false;
                for (int attempt = 0; attempt < params.max_rejection_attempts; ++attempt) {
                    o.center = {rng.uniform(o.size, 1.0 - o.size), rng.uniform(o.size, 1.0 - o.size)};
                    if (detail::placement_ok(placed, o, params.gap_min)) {
                        found = true;
                        break;
                    }
                }
                if (!found) {
                    ok = false;
                    break;
                }
                placed.push_back(o);
            }
        }
        if (!ok) {
            errors[idx] = "proxy placement failed at label " + std::to_string(label);
            return;
        }
        DotDisplay d;
        d.numerosity = count;
        d.objects = std::move(placed);
        d.seed = seed;
        items[idx] = {rasterize(d, params.resolution), label};
    });
    for (const std::string& e : errors)
        if (!e.empty()) throw PlacementFailure(e);
    return items;
}

// ---------------------------------------------------------------------------
// File export.
// ---------------------------------------------------------------------------

inline void write_pgm(const StimulusImage& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f << "P5\n" << img.resolution << " " << img.resolution << "\n255\n";
    std::vector<std::uint8_t> bytes(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) bytes[i] = img.pixels[i] ? 255 : 0;
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace numprobe
