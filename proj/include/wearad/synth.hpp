#pragma once

#include "wearad/cohort.hpp"
#include "wearad/labeling.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace wearad {

struct EffectProfile {
    double resting_hr_bpm = 6.0;   // added to resting heart rate
    double steps_fraction = 0.35;  // relative reduction of daily steps
    double sleep_minutes = 45.0;   // reduction of nightly sleep

    bool operator==(const EffectProfile &) const = default;
};

struct ScenarioConfig {
    int participants = 200;
    int days = 180;
    std::string start_date = "2021-01-04";
    int cadence_days = 14;
    int cadence_jitter_days = 2; // extra delay in [0, jitter] per assessment
    int baseline_assessments = 5;

    // Participant baselines: mean and standard deviation across the cohort.
    double resting_hr_mean = 62.0;
    double resting_hr_sd = 6.0;
    double steps_mean = 8000.0;
    double steps_sd = 2500.0;
    double sleep_mean = 420.0;
    double sleep_sd = 35.0;

    // Day-to-day variation within a participant.
    double resting_hr_noise_sd = 1.5;
    double steps_log_sd = 0.25;
    double sleep_noise_sd = 35.0;
    double weekly_amplitude = 0.1; // relative weekend lift of steps and sleep

    double episode_rate = 0.3; // fraction of participants given episodes
    int episodes_per_participant = 1;
    std::map<std::string, double> category_mix{{"BOTH", 0.25}, {"PHQ_only", 0.375},
                                               {"GAD_only", 0.375}};
    double large_delta_probability = 0.15; // chance a raised score is a 10+ point rise

    EffectProfile effect;
    std::map<std::string, double> category_effect_scale{{"BOTH", 1.25}, {"PHQ_only", 1.0},
                                                        {"GAD_only", 1.0}};
    std::map<std::string, EffectProfile> category_effect; // overrides effect * scale
    double large_effect_scale = 1.3;
    int ramp_days = 5;

    double missing_day_rate = 0.03;
    double minute_dropout_rate = 0.01;
    double covid_rate = 0.05;          // events placed after the baseline
    double covid_baseline_rate = 0.0;  // events that void the baseline

    std::uint64_t seed = 42;

    void validate() const;
    [[nodiscard]] EffectProfile effect_for(EpisodeCategory category, bool large) const;

    bool operator==(const ScenarioConfig &) const = default;
};

void to_json(nlohmann::json &j, const EffectProfile &p);
void from_json(const nlohmann::json &j, EffectProfile &p);
void to_json(nlohmann::json &j, const ScenarioConfig &c);
/// Missing keys keep their defaults; unknown keys are an error.
void from_json(const nlohmann::json &j, ScenarioConfig &c);

struct InjectedEpisode {
    Date assessment_date;
    EpisodeCategory category = EpisodeCategory::kBoth;
    Magnitude magnitude_phq = Magnitude::kNone;
    Magnitude magnitude_gad = Magnitude::kNone;
    Date effect_start;
    Date effect_end;

    bool operator==(const InjectedEpisode &) const = default;
};

struct ParticipantTruth {
    std::string participant_id;
    std::optional<DateInterval> normal_span;
    std::vector<InjectedEpisode> episodes;
    std::vector<Date> covid_dates;

    bool operator==(const ParticipantTruth &) const = default;
};

struct GroundTruth {
    std::vector<ParticipantTruth> participants;

    [[nodiscard]] std::size_t episode_count() const;
    bool operator==(const GroundTruth &) const = default;
};

nlohmann::json ground_truth_to_json(const GroundTruth &truth);
GroundTruth ground_truth_from_json(const nlohmann::json &j);

/// Everything decided about a participant before minute streams are drawn.
struct ParticipantPlan {
    ParticipantTruth truth;
    std::vector<Assessment> assessments;
    double resting_hr = 0.0;
    double steps = 0.0;
    double sleep = 0.0;
    int weekly_phase = 0;
    std::uint64_t stream_seed = 0;
};

/// Baselines, assessment schedules, scores, episode placement and COVID
/// events for every participant. Throws when an episode cannot be placed.
std::vector<ParticipantPlan> plan_cohort(const ScenarioConfig &config);

/// Minute-level streams for one planned participant.
Participant render_participant(const ScenarioConfig &config, const ParticipantPlan &plan);

/// Whole cohort in memory. Large scenarios should render participants one
/// at a time from plan_cohort instead.
std::pair<Cohort, GroundTruth> generate_cohort(const ScenarioConfig &config);

} // namespace wearad
