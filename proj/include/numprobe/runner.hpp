// Experiment orchestration: explicit configs (every parameter materialized,
// every random stage seeded), recipes that reproduce each experiment family,
// run manifests with content-hashed artifacts, and a combined report.
#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "numprobe/net.hpp"
#include "numprobe/probe.hpp"
#include "numprobe/stats.hpp"
#include "numprobe/stimgen.hpp"
#include "numprobe/svg.hpp"

namespace numprobe {

using nlohmann::json;

enum class Recipe : std::uint8_t { GenStimuli, TrainNuNet, TrainProxy, ProbeModel, Sweep, Generalize, Report };

inline const char* recipe_name(Recipe r) {
    switch (r) {
        case Recipe::GenStimuli: return "gen-stimuli";
        case Recipe::TrainNuNet: return "train";
        case Recipe::TrainProxy: return "train-proxy";
        case Recipe::ProbeModel: return "probe";
        case Recipe::Sweep: return "sweep";
        case Recipe::Generalize: return "generalize";
        case Recipe::Report: return "report";
    }
    return "?";
}

inline Recipe recipe_from_name(const std::string& name) {
    for (Recipe r : {Recipe::GenStimuli, Recipe::TrainNuNet, Recipe::TrainProxy, Recipe::ProbeModel,
                     Recipe::Sweep, Recipe::Generalize, Recipe::Report})
        if (name == recipe_name(r)) return r;
    throw DomainError("unknown recipe: " + name);
}

struct ExperimentConfig {
    Recipe recipe = Recipe::GenStimuli;
    std::string out_dir = "run";
    std::uint64_t seed = 1;

    GenerationParams stimulus;

    std::string arch_preset = "desk";  // "desk" or "full"
    int classes = 16;

    std::string init_kind = "normal";  // "uniform" or "normal"
    double init_lo = -0.1, init_hi = 0.1;
    double init_mean = 0.0, init_stddev = 0.05;

    Hyper hyper;

    std::vector<int> s_values = {5, 7, 10, 20, 30, 50, 80, 100};
    double alpha = 0.01;
    int probe_per_cell = 100;
    bool dump_units = false;

    int per_cell_train = 200;
    int per_cell_test = 100;
    int proxy_per_class = 200;

    std::string model_path;  // existing checkpoint for probe/sweep/generalize

    ArchitectureSpec architecture() const {
        if (arch_preset == "desk") return ArchitectureSpec::desk(classes, stimulus.resolution);
        if (arch_preset == "full") return ArchitectureSpec::full(classes);
        throw DomainError("unknown architecture preset: " + arch_preset);
    }

    InitScheme init_scheme() const {
        if (init_kind == "uniform") return InitScheme::uniform(init_lo, init_hi);
        if (init_kind == "normal") return InitScheme::normal(init_mean, init_stddev);
        throw DomainError("unknown init scheme: " + init_kind);
    }
};

inline json to_json(const ExperimentConfig& c) {
    json j;
    j["recipe"] = recipe_name(c.recipe);
    j["out_dir"] = c.out_dir;
    j["seed"] = c.seed;
    j["stimulus"] = {{"resolution", c.stimulus.resolution},
                     {"radius_mean", c.stimulus.radius_mean},
                     {"radius_halfrange", c.stimulus.radius_halfrange},
                     {"variation_scale", c.stimulus.variation_scale},
                     {"gap_min", c.stimulus.gap_min},
                     {"a_total", c.stimulus.a_total},
                     {"h_total", c.stimulus.h_total},
                     {"max_rejection_attempts", c.stimulus.max_rejection_attempts}};
    j["arch"] = {{"preset", c.arch_preset}, {"classes", c.classes}};
    j["init"] = {{"kind", c.init_kind},
                 {"lo", c.init_lo},
                 {"hi", c.init_hi},
                 {"mean", c.init_mean},
                 {"stddev", c.init_stddev}};
    j["hyper"] = {{"learning_rate", c.hyper.learning_rate},
                  {"momentum", c.hyper.momentum},
                  {"batch_size", c.hyper.batch_size},
                  {"epochs", c.hyper.epochs},
                  {"lr_halve_every", c.hyper.lr_halve_every}};
    j["probe"] = {{"s_values", c.s_values},
                  {"alpha", c.alpha},
                  {"per_cell", c.probe_per_cell},
                  {"dump_units", c.dump_units}};
    j["train"] = {{"per_cell_train", c.per_cell_train}, {"per_cell_test", c.per_cell_test}};
    j["proxy"] = {{"per_class", c.proxy_per_class}};
    j["model_path"] = c.model_path;
    return j;
}

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    c.recipe = recipe_from_name(j.value("recipe", "gen-stimuli"));
    c.out_dir = j.value("out_dir", c.out_dir);
    c.seed = j.value("seed", c.seed);
    if (j.contains("stimulus")) {
        const json& s = j.at("stimulus");
        c.stimulus.resolution = s.value("resolution", c.stimulus.resolution);
        c.stimulus.radius_mean = s.value("radius_mean", c.stimulus.radius_mean);
        c.stimulus.radius_halfrange = s.value("radius_halfrange", c.stimulus.radius_halfrange);
        c.stimulus.variation_scale = s.value("variation_scale", c.stimulus.variation_scale);
        c.stimulus.gap_min = s.value("gap_min", c.stimulus.gap_min);
        c.stimulus.a_total = s.value("a_total", c.stimulus.a_total);
        c.stimulus.h_total = s.value("h_total", c.stimulus.h_total);
        c.stimulus.max_rejection_attempts = s.value("max_rejection_attempts", c.stimulus.max_rejection_attempts);
    }
    if (j.contains("arch")) {
        c.arch_preset = j.at("arch").value("preset", c.arch_preset);
        c.classes = j.at("arch").value("classes", c.classes);
    }
    if (j.contains("init")) {
        const json& s = j.at("init");
        c.init_kind = s.value("kind", c.init_kind);
        c.init_lo = s.value("lo", c.init_lo);
        c.init_hi = s.value("hi", c.init_hi);
        c.init_mean = s.value("mean", c.init_mean);
        c.init_stddev = s.value("stddev", c.init_stddev);
    }
    if (j.contains("hyper")) {
        const json& s = j.at("hyper");
        c.hyper.learning_rate = s.value("learning_rate", c.hyper.learning_rate);
        c.hyper.momentum = s.value("momentum", c.hyper.momentum);
        c.hyper.batch_size = s.value("batch_size", c.hyper.batch_size);
        c.hyper.epochs = s.value("epochs", c.hyper.epochs);
        c.hyper.lr_halve_every = s.value("lr_halve_every", c.hyper.lr_halve_every);
    }
    if (j.contains("probe")) {
        const json& s = j.at("probe");
        c.s_values = s.value("s_values", c.s_values);
        c.alpha = s.value("alpha", c.alpha);
        c.probe_per_cell = s.value("per_cell", c.probe_per_cell);
        c.dump_units = s.value("dump_units", c.dump_units);
    }
    if (j.contains("train")) {
        c.per_cell_train = j.at("train").value("per_cell_train", c.per_cell_train);
        c.per_cell_test = j.at("train").value("per_cell_test", c.per_cell_test);
    }
    if (j.contains("proxy")) c.proxy_per_class = j.at("proxy").value("per_class", c.proxy_per_class);
    c.model_path = j.value("model_path", c.model_path);
    return c;
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return to_json(a) == to_json(b);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open config: " + path);
    json j;
    f >> j;
    return config_from_json(j);
}

// Applies "dotted.path=value" overrides on top of the config's JSON form.
inline ExperimentConfig apply_override(const ExperimentConfig& c, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw DomainError("override must look like key.path=value: " + spec);
    const std::string path = spec.substr(0, eq);
    const std::string value = spec.substr(eq + 1);
    json j = to_json(c);
    json* node = &j;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw DomainError("empty override path");
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &((*node)[parts[i]]);
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;  // plain string
    (*node)[parts.back()] = parsed;
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// CSV helpers. All floats use "%.9g" so outputs are byte-reproducible.
// ---------------------------------------------------------------------------

inline std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MissingArtifacts("missing CSV: " + path);
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first) {
            t.header = cells;
            first = false;
        } else {
            t.rows.push_back(cells);
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Run manifest.
// ---------------------------------------------------------------------------

struct RunManifest {
    json config;
    std::string toolkit_version = kToolkitVersion;
    json artifacts = json::array();  // {path, bytes, fnv1a64}
    json timings = json::object();   // stage -> seconds
    json results = json::object();   // recipe-specific summary numbers
    json seeds = json::object();     // stage -> derived seed
};

inline json manifest_to_json(const RunManifest& m) {
    json j;
    j["toolkit_version"] = m.toolkit_version;
    j["config"] = m.config;
    j["artifacts"] = m.artifacts;
    j["timings"] = m.timings;
    j["results"] = m.results;
    j["seeds"] = m.seeds;
    return j;
}

namespace detail {

class RunContext {
public:
    RunContext(const ExperimentConfig& config) : config_(config), dir_(config.out_dir) {
        std::filesystem::create_directories(dir_);
        manifest_.config = to_json(config);
    }

    const std::filesystem::path& dir() const { return dir_; }

    std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

    void note_artifact(const std::string& rel) {
        const std::string full = path(rel);
        std::ifstream f(full, std::ios::binary);
        if (!f) throw MissingArtifacts("artifact was not written: " + full);
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        manifest_.artifacts.push_back(
            {{"path", rel}, {"bytes", bytes.size()}, {"fnv1a64", to_hex(fnv1a64(bytes.data(), bytes.size()))}});
    }

    void write_csv(const std::string& rel, const std::string& header,
                   const std::vector<std::string>& rows) {
        std::ofstream f(path(rel), std::ios::binary);
        if (!f) throw FormatError("cannot open for writing: " + path(rel));
        f << header << "\n";
        for (const auto& r : rows) f << r << "\n";
        f.close();
        note_artifact(rel);
    }

    void write_svg(const std::string& rel, const std::string& content) {
        write_text_file(path(rel), content);
        note_artifact(rel);
    }

    template <typename Fn>
    auto timed(const std::string& stage, Fn&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            manifest_.timings[stage] = elapsed_(t0);
        } else {
            auto out = fn();
            manifest_.timings[stage] = elapsed_(t0);
            return out;
        }
    }

    std::uint64_t stage_seed(const std::string& stage, std::uint64_t salt) {
        const std::uint64_t s = derive_seed(config_.seed, {0xC0FFEEULL, salt});
        manifest_.seeds[stage] = s;
        return s;
    }

    RunManifest& manifest() { return manifest_; }

    RunManifest finish() {
        std::sort(manifest_.artifacts.begin(), manifest_.artifacts.end(),
                  [](const json& a, const json& b) { return a["path"] < b["path"]; });
        std::ofstream f(path("manifest.json"));
        f << manifest_to_json(manifest_).dump(2) << "\n";
        return manifest_;
    }

private:
    static double elapsed_(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    ExperimentConfig config_;
    std::filesystem::path dir_;
    RunManifest manifest_;
};

inline void write_train_log(RunContext& ctx, const std::vector<EpochStats>& history) {
    std::vector<std::string> rows;
    for (std::size_t e = 0; e < history.size(); ++e)
        rows.push_back(std::to_string(e) + "," + fmt_g(history[e].loss) + "," + fmt_g(history[e].accuracy));
    ctx.write_csv("train_log.csv", "epoch,train_loss,train_acc", rows);
}

inline void write_accuracy_csv(RunContext& ctx, const std::string& rel, const AccuracyReport& rep) {
    std::vector<std::string> rows;
    for (int i = 0; i < kLevelCount; ++i)
        rows.push_back(std::to_string(numerosity_levels()[static_cast<std::size_t>(i)]) + "," +
                       fmt_g(rep.per_level[static_cast<std::size_t>(i)]));
    ctx.write_csv(rel, "level,acc", rows);
}

inline std::string accuracy_chart(const std::string& title, const AccuracyReport& rep) {
    std::vector<std::string> cats;
    std::vector<double> vals;
    for (int i = 0; i < kLevelCount; ++i) {
        cats.push_back(std::to_string(numerosity_levels()[static_cast<std::size_t>(i)]));
        vals.push_back(rep.per_level[static_cast<std::size_t>(i)]);
    }
    return render_bar_chart(title, "numerosity", "accuracy", cats, vals);
}

inline void write_tuning_outputs(RunContext& ctx, const std::vector<TuningCurve>& curves) {
    std::vector<std::string> rows;
    std::vector<ChartSeries> series;
    for (const TuningCurve& tc : curves) {
        ChartSeries s;
        s.label = "PN " + std::to_string(tc.pn);
        for (int i = 0; i < kLevelCount; ++i) {
            rows.push_back(std::to_string(tc.pn) + "," +
                           std::to_string(numerosity_levels()[static_cast<std::size_t>(i)]) + "," +
                           fmt_g(tc.mean_response[static_cast<std::size_t>(i)]) + "," +
                           fmt_g(tc.se[static_cast<std::size_t>(i)]) + "," + std::to_string(tc.n_units));
            s.x.push_back(numerosity_levels()[static_cast<std::size_t>(i)]);
            s.y.push_back(tc.mean_response[static_cast<std::size_t>(i)]);
            s.err.push_back(tc.se[static_cast<std::size_t>(i)]);
        }
        series.push_back(std::move(s));
    }
    ctx.write_csv("tuning.csv", "pn,level,mean,se,n_units", rows);
    ctx.write_svg("tuning.svg",
                  render_line_chart("Pooled number response curves", "numerosity", "normalized response", series));
}

inline void write_unit_dump(RunContext& ctx, const SelectivityResult& sel) {
    std::vector<std::string> rows;
    for (std::size_t u = 0; u < sel.labels.size(); ++u) {
        const AnovaTable& t = sel.tables[u];
        rows.push_back(std::to_string(u) + "," + fmt_g(t.f_a) + "," + fmt_g(t.f_b) + "," + fmt_g(t.f_ab) +
                       "," + fmt_g(t.p_a) + "," + fmt_g(t.p_b) + "," + fmt_g(t.p_ab) + "," +
                       selectivity_reason_name(sel.labels[u].reason));
    }
    ctx.write_csv("anova_units.csv", "unit,F_A,F_B,F_AB,p_A,p_B,p_AB,reason", rows);
}

inline ModelCheckpoint load_model_for(const ExperimentConfig& config) {
    if (config.model_path.empty())
        throw MissingArtifacts("this recipe needs model_path (a saved checkpoint)");
    return load_checkpoint(config.model_path);
}

// ---------------------------------------------------------------------------
// Recipes.
// ---------------------------------------------------------------------------

inline RunManifest run_gen_stimuli(RunContext& ctx, const ExperimentConfig& config) {
    const std::uint64_t master = ctx.stage_seed("dataset", 1);
    std::filesystem::create_directories(ctx.dir() / "images");
    std::vector<std::string> rows;
    ctx.timed("generate", [&] {
        for (int lvl = 0; lvl < kLevelCount; ++lvl) {
            const int n = numerosity_levels()[static_cast<std::size_t>(lvl)];
            for (int set = 0; set < kSetCount; ++set) {
                const auto kind = static_cast<StimulusSetKind>(set);
                for (int rep = 0; rep < config.probe_per_cell; ++rep) {
                    const std::uint64_t seed =
                        derive_seed(master, {static_cast<std::uint64_t>(lvl), static_cast<std::uint64_t>(set),
                                             static_cast<std::uint64_t>(rep)});
                    const DotDisplay d = gen_display(kind, n, config.stimulus, seed);
                    const StimulusImage img = rasterize(d, config.stimulus.resolution);
                    const std::string file = std::string("images/") + set_kind_name(kind) + "_" +
                                             std::to_string(n) + "_" + std::to_string(rep) + ".pgm";
                    write_pgm(img, ctx.path(file));
                    ctx.note_artifact(file);
                    rows.push_back(std::to_string(seed) + "," + set_kind_name(kind) + "," + std::to_string(n) +
                                   "," + std::to_string(rep) + "," + file + "," + fmt_g(display_total_area(d)) +
                                   "," + fmt_g(display_hull_area(d)));
                }
            }
        }
    });
    ctx.write_csv("stimuli.csv", "seed,set_kind,numerosity,replicate,file_path,total_area,hull_area", rows);
    ctx.manifest().results["images"] = rows.size();
    return ctx.finish();
}

inline RunManifest run_train_nunet(RunContext& ctx, const ExperimentConfig& config) {
    const auto train_seed = ctx.stage_seed("train_dataset", 2);
    const auto test_seed = ctx.stage_seed("test_dataset", 3);
    const auto init_seed = ctx.stage_seed("init", 4);
    const Dataset train_set = ctx.timed("gen_train", [&] { return gen_dataset(config.per_cell_train, config.stimulus, train_seed); });
    const Dataset test_set = ctx.timed("gen_test", [&] { return gen_dataset(config.per_cell_test, config.stimulus, test_seed); });

    ModelCheckpoint start = init(config.architecture(), config.init_scheme(), init_seed);
    start.meta.labels = numerosity_levels();
    Hyper hyper = config.hyper;
    hyper.seed = ctx.stage_seed("train", 5);
    const TrainResult result = ctx.timed("train", [&] { return train(start, to_examples(train_set), hyper, "numerosity"); });
    save_checkpoint(result.checkpoint, ctx.path("nunet.ckpt"));
    ctx.note_artifact("nunet.ckpt");
    write_train_log(ctx, result.history);

    auto net = Network<float>::from_checkpoint(result.checkpoint);
    const AccuracyReport rep = ctx.timed("evaluate", [&] { return evaluate_accuracy(net, test_set); });
    write_accuracy_csv(ctx, "accuracy.csv", rep);
    ctx.write_svg("accuracy.svg", accuracy_chart("Per-number accuracy (i.i.d. test)", rep));

    ctx.manifest().results["final_train_loss"] = result.history.back().loss;
    ctx.manifest().results["final_train_acc"] = result.history.back().accuracy;
    ctx.manifest().results["test_acc_overall"] = rep.overall;
    return ctx.finish();
}

inline RunManifest run_train_proxy(RunContext& ctx, const ExperimentConfig& config) {
    const auto data_seed = ctx.stage_seed("proxy_dataset", 6);
    const auto init_seed = ctx.stage_seed("init", 7);
    const auto proxy = ctx.timed("gen_proxy", [&] { return gen_proxy_dataset(config.proxy_per_class, config.stimulus, data_seed); });
    ArchitectureSpec arch = ArchitectureSpec::desk(kProxyClassCount, config.stimulus.resolution);
    ModelCheckpoint start = init(arch, config.init_scheme(), init_seed);
    start.meta.labels.resize(kProxyClassCount);
    for (int i = 0; i < kProxyClassCount; ++i) start.meta.labels[static_cast<std::size_t>(i)] = i;
    Hyper hyper = config.hyper;
    hyper.seed = ctx.stage_seed("train", 8);
    const TrainResult result = ctx.timed("train", [&] { return train_recognition_proxy(start, proxy, hyper); });
    save_checkpoint(result.checkpoint, ctx.path("proxy.ckpt"));
    ctx.note_artifact("proxy.ckpt");
    write_train_log(ctx, result.history);
    ctx.manifest().results["final_train_loss"] = result.history.back().loss;
    ctx.manifest().results["final_train_acc"] = result.history.back().accuracy;
    return ctx.finish();
}

inline RunManifest run_probe_model(RunContext& ctx, const ExperimentConfig& config) {
    const ModelCheckpoint model = load_model_for(config);
    auto net = Network<float>::from_checkpoint(model);
    const auto probe_seed = ctx.stage_seed("probe", 9);
    const ResponseMatrix rm = ctx.timed("record", [&] {
        return record_responses(net, config.probe_per_cell, config.stimulus, probe_seed);
    });
    const SelectivityResult sel = ctx.timed("anova", [&] { return selectivity_fraction(rm, config.alpha); });
    ctx.manifest().results["fraction_selective"] = sel.fraction;
    ctx.manifest().results["units"] = rm.unit_count;
    ctx.manifest().results["s"] = config.probe_per_cell;
    if (config.dump_units) write_unit_dump(ctx, sel);
    try {
        const auto curves = tuning_curves(rm, sel.labels);
        write_tuning_outputs(ctx, curves);
        ctx.manifest().results["tuning_curves_formed"] = true;
        ctx.manifest().results["pn_groups"] = curves.size();
    } catch (const NoSelectiveUnits&) {
        // A legitimate experimental outcome: no curves can be formed.
        ctx.manifest().results["tuning_curves_formed"] = false;
        ctx.manifest().results["pn_groups"] = 0;
    }
    return ctx.finish();
}

inline RunManifest run_sweep(RunContext& ctx, const ExperimentConfig& config) {
    ModelCheckpoint model;
    if (!config.model_path.empty()) {
        model = load_model_for(config);
    } else {
        model = init(config.architecture(), config.init_scheme(), ctx.stage_seed("init", 10));
        model.meta.labels = numerosity_levels();
    }
    auto net = Network<float>::from_checkpoint(model);
    const auto sweep_seed = ctx.stage_seed("sweep", 11);
    const SweepResult sweep = ctx.timed("sweep", [&] {
        return sample_size_sweep(net, config.s_values, config.stimulus, sweep_seed, config.alpha);
    });
    std::vector<std::string> rows;
    ChartSeries series;
    series.label = model.meta.task;
    for (std::size_t i = 0; i < sweep.s_values.size(); ++i) {
        rows.push_back(std::to_string(sweep.s_values[i]) + "," + fmt_g(sweep.fraction_selective[i]));
        series.x.push_back(sweep.s_values[i]);
        series.y.push_back(sweep.fraction_selective[i]);
    }
    ctx.write_csv("sweep.csv", "s,fraction", rows);
    ctx.write_svg("sweep.svg", render_line_chart("Numerosity-selective fraction vs ANOVA sample size",
                                                 "per-case sample size s", "fraction selective", {series}));
    ctx.manifest().results["fractions"] = sweep.fraction_selective;
    ctx.manifest().results["s_values"] = sweep.s_values;
    return ctx.finish();
}

inline RunManifest run_generalize(RunContext& ctx, const ExperimentConfig& config) {
    const ModelCheckpoint model = load_model_for(config);
    auto net = Network<float>::from_checkpoint(model);
    const auto iid_seed = ctx.stage_seed("iid_dataset", 12);
    const auto ood_seed = ctx.stage_seed("ood_dataset", 13);
    const Dataset iid_set = ctx.timed("gen_iid", [&] { return gen_dataset(config.per_cell_test, config.stimulus, iid_seed); });
    GenerationParams ood_params = config.stimulus;
    ood_params.variation_scale = 1.5;
    const Dataset ood_set = ctx.timed("gen_ood", [&] { return gen_dataset(config.per_cell_test, ood_params, ood_seed); });

    const auto iid_pred = ctx.timed("eval_iid", [&] { return predict_dataset(net, iid_set); });
    const auto ood_pred = ctx.timed("eval_ood", [&] { return predict_dataset(net, ood_set); });
    const AccuracyReport iid_rep = accuracy_from_predictions(iid_set, iid_pred);
    const AccuracyReport ood_rep = accuracy_from_predictions(ood_set, ood_pred);
    write_accuracy_csv(ctx, "accuracy_iid.csv", iid_rep);
    write_accuracy_csv(ctx, "accuracy_ood.csv", ood_rep);
    ctx.write_svg("accuracy_iid.svg", accuracy_chart("Per-number accuracy (i.i.d.)", iid_rep));
    ctx.write_svg("accuracy_ood.svg", accuracy_chart("Per-number accuracy (widened sizes)", ood_rep));

    // Perceived-number distributions and estimation interval lengths (OOD).
    std::vector<std::string> dist_rows, interval_rows;
    std::vector<double> interval_vals;
    std::vector<std::string> interval_cats;
    for (int lvl = 0; lvl < kLevelCount; ++lvl) {
        const int n = numerosity_levels()[static_cast<std::size_t>(lvl)];
        const PerceivedDistribution dist = distribution_from_predictions(ood_set, ood_pred, n);
        for (int i = 0; i < kLevelCount; ++i)
            dist_rows.push_back(std::to_string(n) + "," +
                                std::to_string(numerosity_levels()[static_cast<std::size_t>(i)]) + "," +
                                fmt_g(dist.mass[static_cast<std::size_t>(i)]));
        const int len = estimation_interval_length(dist, 0.85);
        interval_rows.push_back(std::to_string(n) + "," + std::to_string(len));
        interval_cats.push_back(std::to_string(n));
        interval_vals.push_back(len);
        if (n == 16 || n == 28) {
            std::vector<std::string> cats;
            std::vector<double> vals;
            for (int i = 0; i < kLevelCount; ++i) {
                cats.push_back(std::to_string(numerosity_levels()[static_cast<std::size_t>(i)]));
                vals.push_back(dist.mass[static_cast<std::size_t>(i)]);
            }
            ctx.write_svg("distribution_" + std::to_string(n) + ".svg",
                          render_bar_chart("Perceived numbers, presented " + std::to_string(n),
                                           "perceived number", "probability", cats, vals));
            ctx.manifest().results["unimodal_" + std::to_string(n)] = is_unimodal(dist.mass);
        }
    }
    ctx.write_csv("distribution_ood.csv", "presented,label,mass", dist_rows);
    ctx.write_csv("intervals_ood.csv", "presented,length", interval_rows);
    ctx.write_svg("intervals_ood.svg", render_bar_chart("85% estimation interval length", "presented number",
                                                        "interval length (labels)", interval_cats, interval_vals));

    ctx.manifest().results["iid_acc_overall"] = iid_rep.overall;
    ctx.manifest().results["ood_acc_overall"] = ood_rep.overall;
    ctx.manifest().results["acc_drop"] = iid_rep.overall - ood_rep.overall;
    return ctx.finish();
}

}  // namespace detail

// Executes a recipe end-to-end, writing all artifacts plus manifest.json into
// the configured output directory.
inline RunManifest run(const ExperimentConfig& config) {
    config.stimulus.validate();
    detail::RunContext ctx(config);
    switch (config.recipe) {
        case Recipe::GenStimuli: return detail::run_gen_stimuli(ctx, config);
        case Recipe::TrainNuNet: return detail::run_train_nunet(ctx, config);
        case Recipe::TrainProxy: return detail::run_train_proxy(ctx, config);
        case Recipe::ProbeModel: return detail::run_probe_model(ctx, config);
        case Recipe::Sweep: return detail::run_sweep(ctx, config);
        case Recipe::Generalize: return detail::run_generalize(ctx, config);
        case Recipe::Report: throw DomainError("use report(dirs, out_path) for the report recipe");
    }
    throw DomainError("unhandled recipe");
}

// ---------------------------------------------------------------------------
// Combined report over completed runs.
// ---------------------------------------------------------------------------

inline std::string html_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

inline void report(const std::vector<std::string>& run_dirs, const std::string& out_path) {
    if (run_dirs.empty()) throw MissingArtifacts("report needs at least one completed run directory");
    std::string html = "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>numprobe report</title>\n"
                       "<style>body{font-family:sans-serif;margin:24px;} table{border-collapse:collapse;}"
                       "td,th{border:1px solid #999;padding:4px 8px;} h2{margin-top:32px;}</style></head><body>\n";
    html += "<h1>numprobe report</h1>\n";

    struct SweepInfo {
        std::string name;
        std::vector<double> s, frac;
    };
    std::vector<SweepInfo> sweeps;
    struct AccInfo {
        std::string name;
        CsvTable table;
    };
    std::vector<AccInfo> accuracies;

    for (const std::string& dir : run_dirs) {
        const std::string manifest_path = (std::filesystem::path(dir) / "manifest.json").string();
        std::ifstream mf(manifest_path);
        if (!mf) throw MissingArtifacts("no manifest.json in " + dir);
        json manifest;
        mf >> manifest;
        const std::string recipe = manifest["config"].value("recipe", "?");
        html += "<h2>" + html_escape(dir) + " (" + html_escape(recipe) + ")</h2>\n";
        html += "<table><tr><th>result</th><th>value</th></tr>\n";
        for (auto it = manifest["results"].begin(); it != manifest["results"].end(); ++it)
            html += "<tr><td>" + html_escape(it.key()) + "</td><td>" + html_escape(it.value().dump()) +
                    "</td></tr>\n";
        html += "</table>\n";

        for (const auto& art : manifest["artifacts"]) {
            const std::string rel = art["path"];
            if (rel.size() > 4 && rel.substr(rel.size() - 4) == ".svg") {
                std::ifstream sf(std::filesystem::path(dir) / rel);
                if (sf) {
                    std::stringstream buf;
                    buf << sf.rdbuf();
                    html += "<div>" + buf.str() + "</div>\n";
                }
            }
        }

        if (recipe == "sweep") {
            const CsvTable t = read_csv((std::filesystem::path(dir) / "sweep.csv").string());
            SweepInfo info;
            info.name = dir;
            for (const auto& row : t.rows) {
                info.s.push_back(std::stod(row.at(0)));
                info.frac.push_back(std::stod(row.at(1)));
            }
            sweeps.push_back(std::move(info));
        }
        if (recipe == "train" || recipe == "generalize") {
            for (const char* name : {"accuracy.csv", "accuracy_iid.csv", "accuracy_ood.csv"}) {
                const auto p = std::filesystem::path(dir) / name;
                if (std::filesystem::exists(p)) accuracies.push_back({dir + "/" + name, read_csv(p.string())});
            }
        }
    }

    if (sweeps.size() >= 2) {
        html += "<h2>Sweep comparison</h2>\n";
        std::vector<ChartSeries> series;
        for (const auto& s : sweeps) {
            ChartSeries cs;
            cs.label = s.name;
            cs.x = s.s;
            cs.y = s.frac;
            series.push_back(std::move(cs));
        }
        html += "<div>" + render_line_chart("Selective fraction vs s, all runs", "s", "fraction", series) +
                "</div>\n";
    }
    if (accuracies.size() >= 2) {
        html += "<h2>Per-number accuracy comparison</h2>\n<table><tr><th>level</th>";
        for (const auto& a : accuracies) html += "<th>" + html_escape(a.name) + "</th>";
        html += "</tr>\n";
        for (std::size_t r = 0; r < accuracies[0].table.rows.size(); ++r) {
            html += "<tr><td>" + accuracies[0].table.rows[r].at(0) + "</td>";
            for (const auto& a : accuracies)
                html += "<td>" + (r < a.table.rows.size() ? a.table.rows[r].at(1) : std::string("-")) + "</td>";
            html += "</tr>\n";
        }
        html += "</table>\n";
    }
    html += "</body></html>\n";
    write_text_file(out_path, html);
}

}  // namespace numprobe
