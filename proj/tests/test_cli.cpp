#include "wearad/csv.hpp"
#include "wearad/error.hpp"
#include "wearad/stages.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

namespace wearad {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

nlohmann::json read_json(const fs::path &p) { return nlohmann::json::parse(slurp(p)); }

CsvTable read_table(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    return read_csv(in, p.string());
}

// A cohort small enough to push through every stage in seconds.
PipelineConfig small_config(std::uint64_t seed) {
    auto c = nlohmann::json{{"scenario", {{"participants", 4}, {"days", 120}, {"episode_rate", 0.5}}},
                            {"train", {{"hidden_size", 8}, {"max_epochs", 10}}},
                            {"explain",
                             {{"background_size", 8},
                              {"permutations", 16},
                              {"max_windows_per_episode", 3},
                              {"max_false_alarm_windows", 3}}},
                            {"seed", seed}}
                 .get<PipelineConfig>();
    c.validate();
    return c;
}

fs::path scratch(const std::string &name) {
    const auto dir = fs::temp_directory_path() / fmt::format("wearad_cli_{}_{}", name, ::getpid());
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void run_all(const fs::path &workdir, const PipelineConfig &config) {
    for (auto stage : kStages) {
        run_stage(stage, workdir, config);
    }
}

// Every stage output, with report/ expanded to its files.
std::vector<fs::path> all_outputs(const fs::path &workdir) {
    std::vector<fs::path> out;
    for (auto stage : kStages) {
        for (const auto &name : stage_outputs(stage)) {
            const auto p = workdir / name;
            if (fs::is_directory(p)) {
                for (const auto &e : fs::directory_iterator(p)) {
                    out.push_back(e.path());
                }
            } else {
                out.push_back(p);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

class CliPipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        config_ = new PipelineConfig(small_config(7));
        workdir_ = new fs::path(scratch("main"));
        run_all(*workdir_, *config_);
    }
    static void TearDownTestSuite() {
        fs::remove_all(*workdir_);
        delete workdir_;
        delete config_;
    }

    static PipelineConfig *config_;
    static fs::path *workdir_;
};

PipelineConfig *CliPipeline::config_ = nullptr;
fs::path *CliPipeline::workdir_ = nullptr;

TEST_F(CliPipeline, EveryStageWritesItsOutputs) {
    for (auto stage : kStages) {
        for (const auto &name : stage_outputs(stage)) {
            EXPECT_TRUE(fs::exists(*workdir_ / name)) << name;
        }
    }
    EXPECT_GE(all_outputs(*workdir_).size(), 30U);
}

TEST_F(CliPipeline, EveryOutputCarriesProvenance) {
    const auto p = provenance(*config_);
    const auto line = fmt::format("# provenance: config_hash={} seed={}\n", p.config_hash, p.seed);
    for (const auto &file : all_outputs(*workdir_)) {
        const auto ext = file.extension();
        if (file.filename() == "cohort.jsonl") {
            continue; // raw input format; its provenance lives in ground_truth.json
        }
        if (ext == ".csv") {
            EXPECT_EQ(slurp(file).rfind(line, 0), 0U) << file;
            EXPECT_EQ(read_table(file).provenance, p) << file;
        } else if (ext == ".json") {
            const auto j = read_json(file);
            ASSERT_TRUE(j.contains("provenance")) << file;
            EXPECT_EQ(j["provenance"], provenance_json(p)) << file;
        } else {
            ADD_FAILURE() << "unexpected output " << file;
        }
    }
}

TEST_F(CliPipeline, RerunningStagesRewritesIdenticalBytes) {
    std::map<fs::path, std::string> before;
    for (const auto &f : all_outputs(*workdir_)) {
        before[f] = slurp(f);
    }
    for (auto stage : kStages) {
        if (stage != Stage::kSimulate) {
            run_stage(stage, *workdir_, *config_);
        }
    }
    for (const auto &[f, bytes] : before) {
        EXPECT_EQ(slurp(f), bytes) << f;
    }
    // No temporaries are left behind.
    for (const auto &e : fs::recursive_directory_iterator(*workdir_)) {
        EXPECT_NE(e.path().extension(), ".tmp") << e.path();
    }
}

TEST_F(CliPipeline, IndependentRunsAreByteIdentical) {
    const auto other = scratch("twin");
    run_all(other, *config_);
    for (const auto &f : all_outputs(*workdir_)) {
        EXPECT_EQ(slurp(other / fs::relative(f, *workdir_)), slurp(f)) << f;
    }
    fs::remove_all(other);
}

TEST_F(CliPipeline, SweepFlagCountsNeverIncrease) {
    const auto sweep = read_json(*workdir_ / "metrics.json").at("threshold_sweep");
    ASSERT_EQ(sweep.size(), config_->sweep_percentiles.size());
    for (std::size_t i = 1; i < sweep.size(); ++i) {
        EXPECT_LE(sweep[i]["flagged"].get<std::size_t>(), sweep[i - 1]["flagged"].get<std::size_t>());
    }
    const auto table = read_table(*workdir_ / "threshold_sweep.csv");
    EXPECT_EQ(table.rows.size(), sweep.size());
}

TEST_F(CliPipeline, EpisodesMatchGroundTruth) {
    using Key = std::tuple<std::string, std::string, std::string, std::string, std::string>;
    std::set<Key> truth;
    const auto gt = read_json(*workdir_ / "ground_truth.json");
    for (const auto &p : gt.at("ground_truth").at("participants")) {
        for (const auto &e : p.at("episodes")) {
            truth.emplace(p.at("participant_id"), e.at("assessment_date"), e.at("category"),
                          e.at("magnitude_phq"), e.at("magnitude_gad"));
        }
    }
    std::set<Key> labeled;
    const auto t = read_table(*workdir_ / "episodes.csv");
    for (const auto &r : t.rows) {
        labeled.emplace(r[t.column("participant_id")], r[t.column("assessment_date")],
                        r[t.column("category")], r[t.column("magnitude_phq")],
                        r[t.column("magnitude_gad")]);
    }
    EXPECT_FALSE(truth.empty());
    EXPECT_EQ(labeled, truth);
}

TEST_F(CliPipeline, StagesReadOnlyTheirInputs) {
    // Copy only what label and features produce; later stages must rebuild
    // the rest from those files alone.
    const auto iso = scratch("iso");
    for (auto stage : {Stage::kLabel, Stage::kFeatures}) {
        for (const auto &name : stage_outputs(stage)) {
            fs::copy_file(*workdir_ / name, iso / name);
        }
    }
    try {
        run_stage(Stage::kDetect, iso, *config_);
        ADD_FAILURE() << "detect ran without a model";
    } catch (const MissingInputError &e) {
        EXPECT_EQ(e.producer(), Stage::kTrain);
    }
    run_stage(Stage::kTrain, iso, *config_);
    run_stage(Stage::kDetect, iso, *config_);
    EXPECT_EQ(slurp(iso / "model.json"), slurp(*workdir_ / "model.json"));
    EXPECT_EQ(slurp(iso / "detections.csv"), slurp(*workdir_ / "detections.csv"));
    // Explain depends on detect, not on evaluate.
    run_stage(Stage::kExplain, iso, *config_);
    for (const auto &name : stage_outputs(Stage::kExplain)) {
        EXPECT_EQ(slurp(iso / name), slurp(*workdir_ / name)) << name;
    }
    EXPECT_FALSE(fs::exists(iso / "metrics.json"));
    fs::remove_all(iso);
}

TEST_F(CliPipeline, ConfigChangeChangesProvenance) {
    auto other = *config_;
    other.percentile = 90;
    const auto dir = scratch("p90");
    for (auto stage : {Stage::kLabel, Stage::kFeatures, Stage::kTrain}) {
        for (const auto &name : stage_outputs(stage)) {
            fs::copy_file(*workdir_ / name, dir / name);
        }
    }
    run_stage(Stage::kDetect, dir, other);
    const auto t = read_table(dir / "detections.csv");
    EXPECT_EQ(t.provenance, provenance(other));
    EXPECT_NE(t.provenance.config_hash, provenance(*config_).config_hash);
    fs::remove_all(dir);
}

TEST(CliStages, ReportOnEmptyWorkdirNamesTheMissingStage) {
    const auto dir = scratch("empty");
    try {
        run_stage(Stage::kReport, dir, small_config(7));
        ADD_FAILURE() << "report ran on an empty workdir";
    } catch (const MissingInputError &e) {
        EXPECT_EQ(e.producer(), Stage::kLabel);
        EXPECT_NE(std::string(e.what()).find("'label'"), std::string::npos);
    }
    fs::remove_all(dir);
}

TEST(CliStages, StageNamesRoundTrip) {
    for (auto s : kStages) {
        EXPECT_EQ(stage_from_string(to_string(s)), s);
    }
    EXPECT_FALSE(stage_from_string("nope"));
}

int run_binary(const std::string &args, const fs::path &capture) {
    const auto cmd = fmt::format("\"{}\" {} >\"{}\" 2>&1", WEARAD_CLI_PATH, args, capture.string());
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(CliBinary, MissingInputExitsNonzeroNamingStage) {
    const auto dir = scratch("bin_empty");
    const auto log = dir / "log.txt";
    EXPECT_NE(run_binary(fmt::format("report --workdir \"{}\"", (dir / "w").string()), log), 0);
    const auto text = slurp(log);
    EXPECT_NE(text.find("error:"), std::string::npos) << text;
    EXPECT_NE(text.find("'label'"), std::string::npos) << text;
    fs::remove_all(dir);
}

TEST(CliBinary, RejectsBadOptions) {
    const auto dir = scratch("bin_bad");
    EXPECT_NE(run_binary("detect --percentile 150", dir / "a.txt"), 0);
    EXPECT_NE(run_binary("nonsense", dir / "b.txt"), 0);
    std::ofstream(dir / "bad.json") << R"({"seed": 1, "train": {"seed": 2}})";
    EXPECT_NE(run_binary(fmt::format("label --workdir \"{}\" --config \"{}\"", (dir / "w").string(),
                                     (dir / "bad.json").string()),
                         dir / "c.txt"),
              0);
    EXPECT_NE(slurp(dir / "c.txt").find("seed"), std::string::npos);
    fs::remove_all(dir);
}

TEST(CliBinary, SimulateAndLabelThroughTheBinary) {
    const auto dir = scratch("bin_run");
    const auto work = dir / "w";
    std::ofstream(dir / "small.json") << nlohmann::json(small_config(3)).dump();
    const auto args = [&](const char *stage) {
        return fmt::format("{} --workdir \"{}\" --config \"{}\" --seed 3", stage, work.string(),
                           (dir / "small.json").string());
    };
    ASSERT_EQ(run_binary(args("simulate"), dir / "a.txt"), 0) << slurp(dir / "a.txt");
    ASSERT_EQ(run_binary(args("label"), dir / "b.txt"), 0) << slurp(dir / "b.txt");
    const auto p = provenance(small_config(3));
    EXPECT_EQ(read_table(work / "episodes.csv").provenance, p);
    EXPECT_TRUE(fs::exists(work / "configs" / (p.config_hash + ".json")));
    fs::remove_all(dir);
}

} // namespace
} // namespace wearad
