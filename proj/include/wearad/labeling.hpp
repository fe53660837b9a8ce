#pragma once

#include "wearad/cohort.hpp"
#include "wearad/date.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wearad {

/// Rule parameters for normal periods, episodes and anomalous windows.
/// Defaults are the published study rules.
struct LabelingConfig {
    int normal_score_limit = 5; // both scores strictly below this
    int min_normal_span_days = 56;
    int min_normal_assessments = 4;
    int max_assessment_gap_days = 21;
    int covid_days_before = 7;
    int covid_days_after = 21;
    int episode_delta = 5;
    int large_delta = 10;
    int anomalous_days_before = 21;
    int anomalous_days_after = 14;

    void validate() const;
};

struct NormalPeriod {
    std::string participant_id;
    Date start_date;
    Date end_date;
    int assessment_count = 0;
    int sum_phq8 = 0;
    int sum_gad7 = 0;
    double mean_phq8 = 0.0;
    double mean_gad7 = 0.0;

    [[nodiscard]] DateInterval interval() const { return {start_date, end_date}; }
    [[nodiscard]] int span_days() const { return end_date - start_date; }

    bool operator==(const NormalPeriod &) const = default;
};

enum class EpisodeCategory { kBoth, kPhqOnly, kGadOnly };
enum class Magnitude { kNone, kD5to9, kD10Plus };

std::string_view to_string(EpisodeCategory category);
std::string_view to_string(Magnitude magnitude);
EpisodeCategory episode_category_from_string(std::string_view text);
Magnitude magnitude_from_string(std::string_view text);

struct Episode {
    std::string participant_id;
    Date assessment_date;
    EpisodeCategory category = EpisodeCategory::kBoth;
    double phq_delta = 0.0;
    double gad_delta = 0.0;
    Magnitude magnitude_phq = Magnitude::kNone;
    Magnitude magnitude_gad = Magnitude::kNone;
    Date period_start;
    Date period_end;

    /// "<participant_id>@<assessment date>", unique within a cohort.
    [[nodiscard]] std::string id() const;
    [[nodiscard]] DateInterval period() const { return {period_start, period_end}; }

    bool operator==(const Episode &) const = default;
};

using CovidExclusion = DateInterval;

/// One exclusion per event, [report - before, report + after], with
/// overlapping or adjacent intervals merged. Result is sorted.
std::vector<CovidExclusion> covid_exclusions(std::span<const CovidEvent> events,
                                             const LabelingConfig &config = {});

/// All maximal runs of low-score assessments (neighbours at most
/// max_assessment_gap_days apart) meeting the span and count minimums and
/// touching no exclusion interval. Assessments must be date ordered.
std::vector<NormalPeriod> find_normal_periods(std::string_view participant_id,
                                              std::span<const Assessment> assessments,
                                              std::span<const CovidExclusion> exclusions,
                                              const LabelingConfig &config = {});

/// Episodes relative to a single baseline.
std::vector<Episode> find_episodes(std::span<const Assessment> assessments,
                                   const NormalPeriod &baseline, const LabelingConfig &config = {});

/// Episodes relative to several normal periods; each assessment outside all
/// periods is compared with the nearest preceding period, or with the
/// earliest period when none precedes it.
std::vector<Episode> find_episodes(std::span<const Assessment> assessments,
                                   std::span<const NormalPeriod> periods,
                                   const LabelingConfig &config = {});

enum class DayLabel { kNormalEligible, kAnomalous, kAmbiguous };

std::string_view to_string(DayLabel label);
DayLabel day_label_from_string(std::string_view text);

struct LabeledDay {
    Date date;
    DayLabel label = DayLabel::kAmbiguous;
    std::vector<std::string> episode_ids;

    bool operator==(const LabeledDay &) const = default;
};

/// One entry per calendar day of `calendar`: anomalous inside any episode
/// period, normal_eligible inside a normal period, ambiguous otherwise.
std::vector<LabeledDay> day_labels(std::span<const Episode> episodes,
                                   std::span<const NormalPeriod> periods, DateInterval calendar);

/// Everything the labeling rules derive for one participant.
struct ParticipantLabels {
    std::vector<CovidExclusion> exclusions;
    std::vector<NormalPeriod> normal_periods;
    std::vector<Episode> episodes;
};

ParticipantLabels label_participant(const Participant &participant,
                                    const LabelingConfig &config = {});

} // namespace wearad
