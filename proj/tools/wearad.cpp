#include "wearad/error.hpp"
#include "wearad/pipeline.hpp"
#include "wearad/stages.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <fmt/format.h>

namespace {

struct Options {
    std::string workdir = "work";
    std::string config_file;
    std::string cohort;
    std::optional<std::uint64_t> seed;
    std::optional<double> percentile;
    bool strict = false;
};

wearad::PipelineConfig resolve_config(const Options &opts) {
    wearad::PipelineConfig config;
    if (!opts.config_file.empty()) {
        std::ifstream in(opts.config_file);
        if (!in) {
            throw wearad::Error(fmt::format("cannot read config {}", opts.config_file));
        }
        try {
            config = nlohmann::json::parse(in).get<wearad::PipelineConfig>();
        } catch (const nlohmann::json::exception &e) {
            throw wearad::Error(fmt::format("{}: {}", opts.config_file, e.what()));
        }
    }
    if (opts.seed) {
        config.seed = *opts.seed;
    }
    if (opts.percentile) {
        config.percentile = *opts.percentile;
    }
    if (opts.strict) {
        config.strict = true;
    }
    if (!opts.cohort.empty()) {
        config.cohort = opts.cohort;
    }
    config.apply_seed();
    config.validate();
    return config;
}

// Keeps the resolved config next to the outputs so a config hash printed in
// any file can be traced back to its knobs.
void snapshot_config(const std::filesystem::path &workdir, const wearad::PipelineConfig &config) {
    const auto dir = workdir / "configs";
    std::filesystem::create_directories(dir);
    const auto path = dir / (wearad::config_hash(config) + ".json");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << nlohmann::json(config).dump(2) << '\n';
}

int run(const std::vector<wearad::Stage> &stages, const Options &opts) {
    const auto config = resolve_config(opts);
    const std::filesystem::path workdir(opts.workdir);
    std::filesystem::create_directories(workdir);
    snapshot_config(workdir, config);
    for (auto stage : stages) {
        const auto start = std::chrono::steady_clock::now();
        const auto result = wearad::run_stage(stage, workdir, config);
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
        for (const auto &w : result.warnings) {
            std::cerr << "warning: " << w << '\n';
        }
        std::cout << fmt::format("[{}] {} ({:.1f}s)\n", wearad::to_string(stage), result.summary,
                                 elapsed.count());
    }
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Explainable anomaly detection for wearable time series"};
    app.require_subcommand(1);
    Options opts;

    const auto add_common = [&](CLI::App *cmd) {
        cmd->add_option("-w,--workdir", opts.workdir, "Directory holding every stage's files")
            ->capture_default_str();
        cmd->add_option("-c,--config", opts.config_file, "Pipeline config JSON")->check(CLI::ExistingFile);
        cmd->add_option("--cohort", opts.cohort, "Cohort JSONL to read instead of <workdir>/cohort.jsonl");
        cmd->add_option("--seed", opts.seed, "Global seed (overrides the config)");
        cmd->add_option("--percentile", opts.percentile, "Threshold percentile of validation errors")
            ->check(CLI::Range(0.0, 100.0));
        cmd->add_flag("--strict", opts.strict, "Treat implausible input values as errors");
    };

    std::vector<std::pair<CLI::App *, std::vector<wearad::Stage>>> commands;
    const std::map<wearad::Stage, std::string> help{
        {wearad::Stage::kSimulate, "Generate a synthetic cohort with ground truth"},
        {wearad::Stage::kLabel, "Find COVID exclusions, normal periods, episodes and day labels"},
        {wearad::Stage::kFeatures, "Extract daily features, normalize and cut 7-day windows"},
        {wearad::Stage::kTrain, "Train the LSTM autoencoder on normal windows"},
        {wearad::Stage::kDetect, "Score every window and flag those above the threshold"},
        {wearad::Stage::kEvaluate, "Adjusted precision/recall/F, breakdowns, sweep, aligned averages"},
        {wearad::Stage::kExplain, "Shapley attributions, feature ranks and chi-square tests"},
        {wearad::Stage::kReport, "Assemble the report bundle under <workdir>/report"}};
    for (auto stage : wearad::kStages) {
        auto *cmd = app.add_subcommand(std::string(wearad::to_string(stage)), help.at(stage));
        add_common(cmd);
        commands.push_back({cmd, {stage}});
    }
    auto *all = app.add_subcommand("all", "Run every stage from simulate to report");
    add_common(all);
    commands.push_back({all, std::vector<wearad::Stage>(wearad::kStages.begin(), wearad::kStages.end())});

    CLI11_PARSE(app, argc, argv);
    try {
        for (const auto &[cmd, stages] : commands) {
            if (cmd->parsed()) {
                return run(stages, opts);
            }
        }
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
