#pragma once

#include "wearad/csv.hpp"
#include "wearad/detector.hpp"
#include "wearad/evaluation.hpp"
#include "wearad/explain.hpp"
#include "wearad/features.hpp"
#include "wearad/labeling.hpp"
#include "wearad/lstm_ae.hpp"
#include "wearad/synth.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace wearad {

struct ExplainConfig {
    int background_size = 50;
    int permutations = 200;
    int max_windows_per_episode = 7;  // highest-error windows of each episode; 0 = all
    int max_false_alarm_windows = 20; // highest-error flagged normal windows; 0 = none

    void validate() const;
    bool operator==(const ExplainConfig &) const = default;
};

/// Every knob of the pipeline. `seed` is the single global seed: the
/// scenario and training seeds are taken from it.
struct PipelineConfig {
    std::string cohort; // input cohort JSONL; empty means <workdir>/cohort.jsonl
    ScenarioConfig scenario;
    LabelingConfig labeling;
    FeatureConfig features;
    TrainConfig train;
    double percentile = 95.0;
    std::vector<double> sweep_percentiles{90, 91, 92, 93, 94, 95, 96, 97, 98, 99, 100};
    ExplainConfig explain;
    std::uint64_t seed = 42;
    bool strict = false;

    void validate() const;
    /// Copies `seed` into the scenario and training configs.
    void apply_seed();
};

void to_json(nlohmann::json &j, const ExplainConfig &c);
void from_json(const nlohmann::json &j, ExplainConfig &c);
void to_json(nlohmann::json &j, const PipelineConfig &c);
/// Missing keys keep their defaults; unknown keys and nested seeds that
/// disagree with the global seed are errors.
void from_json(const nlohmann::json &j, PipelineConfig &c);

/// 16 hex digits of FNV-1a over the canonical JSON of every knob except the
/// input path, so relocating a cohort file does not change the hash.
std::string config_hash(const PipelineConfig &config);
Provenance provenance(const PipelineConfig &config);
nlohmann::json provenance_json(const Provenance &provenance);

// ---- label -------------------------------------------------------------

struct LabeledParticipant {
    std::string participant_id;
    ParticipantLabels labels;
    std::optional<DateInterval> calendar; // span of the minute records
    std::vector<LabeledDay> days;         // one per calendar day
};

LabeledParticipant label_participant_days(const Participant &participant,
                                          const LabelingConfig &config);

// ---- features ----------------------------------------------------------

struct FeatureSet {
    std::vector<ParticipantSeries> series;
    std::vector<Window> windows;
};

/// Normalizes one participant's daily features and appends its windows.
/// Participants lacking any observation of a feature contribute nothing.
void add_participant(FeatureSet &set, std::string_view participant_id,
                     std::span<const DailyFeatures> daily, std::span<const LabeledDay> days);

// ---- train -------------------------------------------------------------

struct TrainingSet {
    std::vector<WindowValues> values;
    std::vector<std::size_t> window_index; // position of each value in the window list
};

TrainingSet training_set(std::span<const Window> windows, const FeatureConfig &config);

struct TrainResult {
    LstmAutoencoder model;
    TrainReport report;
};

/// Trains on the normal-eligible windows and records the normalization
/// constants and the threshold at `config.percentile`.
TrainResult train_model(std::span<const Window> windows, std::span<const ParticipantSeries> series,
                        const PipelineConfig &config);

// ---- evaluate ----------------------------------------------------------

struct SweepPoint {
    double percentile = 0.0;
    double threshold = 0.0;
    std::size_t flagged = 0;
    AdjustedPRF prf;
};

struct Evaluation {
    double percentile = 0.0;
    double threshold = 0.0;
    std::size_t windows = 0;
    std::size_t flagged = 0;
    AdjustedPRF overall;
    Breakdown breakdown;
    OutcomeSummary outcomes;
    std::vector<SweepPoint> sweep;
    std::vector<AlignedAverage> aligned;
};

/// Re-thresholds the scored windows at each sweep percentile of the
/// validation errors; `detections` carry the errors.
Evaluation evaluate_detections(std::span<const Detection> detections,
                               std::span<const Episode> episodes,
                               std::span<const double> validation_errors,
                               std::span<const ParticipantSeries> series,
                               const PipelineConfig &config);

nlohmann::json metrics_json(const Evaluation &evaluation, const Provenance &provenance);

// ---- explain -----------------------------------------------------------

struct ExplainedWindow {
    AttributionMatrix attribution;
    WindowValues values;
    std::string reason; // episode id, or "false_alarm"
    double threshold = 0.0;
};

struct EpisodeRanking {
    std::string episode_id;
    EpisodeCategory category = EpisodeCategory::kBoth;
    FeatureRanking ranking;
    std::size_t windows = 0;
};

struct RankTest {
    int rank = 0;
    std::vector<std::string> categories; // rows kept (categories with episodes)
    std::vector<std::string> features;   // columns kept (features seen at this rank)
    std::optional<ChiSquareResult> result;
    std::string error; // set when the test is not computable
};

struct Explanation {
    std::vector<ExplainedWindow> windows;
    std::vector<EpisodeRanking> rankings;
    RankTable table;
    std::vector<RankTest> tests;
    std::vector<TimeDynamicPoint> dynamics;
};

/// Chi-square test of one rank slice after dropping all-zero rows and
/// columns, which carry no information and would make expected counts zero.
RankTest rank_test(const RankTable &table, int rank);

/// Samples the background from `background_pool` (the validation normal
/// windows) and attributes the selected episode and false-alarm windows.
Explanation explain_detections(const LstmAutoencoder &model, std::span<const Window> windows,
                               std::span<const Detection> detections,
                               std::span<const Episode> episodes,
                               std::span<const WindowValues> background_pool,
                               const PipelineConfig &config);

nlohmann::json rank_tests_json(const Explanation &explanation, const Provenance &provenance);

} // namespace wearad
