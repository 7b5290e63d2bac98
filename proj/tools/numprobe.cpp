// numprobe: command-line front end for the experiment recipes.
#include <deque>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "numprobe/runner.hpp"

using namespace numprobe;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string model_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file");
    cmd->add_option("--out", args.out_dir, "output directory for artifacts");
    cmd->add_option("--seed", args.seed, "master seed")->each([&](const std::string&) { args.seed_set = true; });
    cmd->add_option("--override", args.overrides, "config override, key.path=value")->take_all();
}

ExperimentConfig build_config(Recipe recipe, const CommonArgs& args) {
    ExperimentConfig config;
    if (!args.config_path.empty()) config = load_config(args.config_path);
    config.recipe = recipe;
    if (!args.out_dir.empty()) config.out_dir = args.out_dir;
    if (args.seed_set) config.seed = args.seed;
    if (!args.model_path.empty()) config.model_path = args.model_path;
    for (const std::string& o : args.overrides) config = apply_override(config, o);
    return config;
}

void print_summary(const RunManifest& manifest) {
    std::cout << "wrote " << manifest.artifacts.size() << " artifacts to "
              << manifest.config.value("out_dir", "?") << "\n";
    for (auto it = manifest.results.begin(); it != manifest.results.end(); ++it)
        std::cout << "  " << it.key() << " = " << it.value().dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"numprobe: numerosity probing experiments for small convolutional networks"};
    app.require_subcommand(1);

    struct Sub {
        Recipe recipe;
        CLI::App* cmd;
        CommonArgs args;
    };
    std::deque<Sub> subs;  // stable addresses; CLI11 keeps references into args
    auto add_recipe = [&](Recipe r, const std::string& help) -> Sub& {
        subs.push_back({r, app.add_subcommand(recipe_name(r), help), {}});
        add_common(subs.back().cmd, subs.back().args);
        return subs.back();
    };

    Sub& gen = add_recipe(Recipe::GenStimuli, "generate the three stimulus sets as PGM images + CSV manifest");
    int per_cell = 0;
    double variation_scale = 0.0;
    gen.cmd->add_option("--per-cell", per_cell, "images per (numerosity, set) cell");
    gen.cmd->add_option("--variation-scale", variation_scale, "object size variation multiplier (1.0 = training)");

    add_recipe(Recipe::TrainNuNet, "train the numerosity classifier and evaluate on an i.i.d. test set");
    add_recipe(Recipe::TrainProxy, "train the shape/size recognition proxy task");
    Sub& probe = add_recipe(Recipe::ProbeModel, "record responses and detect numerosity-selective units");
    Sub& sweep = add_recipe(Recipe::Sweep, "selective fraction as a function of the ANOVA sample size");
    Sub& gener = add_recipe(Recipe::Generalize, "i.i.d. vs widened-size evaluation of a trained checkpoint");
    for (Sub* s : {&probe, &sweep, &gener})
        s->cmd->add_option("--model", s->args.model_path, "checkpoint file to load");

    auto* report_cmd = app.add_subcommand("report", "combine completed runs into a single HTML report");
    std::vector<std::string> report_dirs;
    std::string report_out = "report.html";
    report_cmd->add_option("runs", report_dirs, "completed run directories");
    report_cmd->add_option("--out", report_out, "output HTML path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (report_cmd->parsed()) {
            report(report_dirs, report_out);
            std::cout << "wrote " << report_out << "\n";
            return 0;
        }
        for (Sub& s : subs) {
            if (!s.cmd->parsed()) continue;
            ExperimentConfig config = build_config(s.recipe, s.args);
            if (s.recipe == Recipe::GenStimuli) {
                if (per_cell > 0) config.probe_per_cell = per_cell;
                if (variation_scale > 0.0) config.stimulus.variation_scale = variation_scale;
            }
            print_summary(run(config));
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
