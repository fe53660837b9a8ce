#pragma once

#include "wearad/detector.hpp"
#include "wearad/features.hpp"
#include "wearad/labeling.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wearad {

struct AdjustedPRF {
    double precision = 0.0;
    double recall = 0.0;
    double f_score = 0.0;
    std::size_t tp = 0;
    double fp = 0.0; // whole counts overall; prorated shares inside strata
    std::size_t fn = 0;

    bool operator==(const AdjustedPRF &) const = default;
};

/// P = tp / (tp + fp), R = tp / (tp + fn), F their harmonic mean; each 0
/// when its denominator is 0.
AdjustedPRF prf_from_counts(std::size_t tp, double fp, std::size_t fn);

/// Episode-level point adjustment over windows. An episode is detected when
/// any window carrying its id is flagged; every anomalous window of a
/// detected episode is a true positive, the rest are false negatives.
/// Flagged normal-eligible windows are false positives; ambiguous windows
/// are ignored.
AdjustedPRF adjusted_prf(std::span<const Detection> detections);

/// Ids of episodes with at least one flagged window.
std::vector<std::string> detected_episodes(std::span<const Detection> detections);

struct EpisodeOutcome {
    std::string episode_id;
    std::string participant_id;
    Date assessment_date;
    EpisodeCategory category = EpisodeCategory::kBoth;
    Magnitude magnitude_phq = Magnitude::kNone;
    Magnitude magnitude_gad = Magnitude::kNone;
    bool detected = false;
    std::size_t windows = 0;
    std::size_t flagged_windows = 0;
    std::size_t local_false_positives = 0;
    double f_score = 0.0;
};

struct OutcomeSummary {
    std::vector<EpisodeOutcome> outcomes;
    std::optional<double> detection_rate; // absent when there are no episodes
};

/// Days either side of the assessment date within which a participant's
/// flagged normal windows are charged to an episode's own F-score.
inline constexpr int kLocalFalsePositiveDays = 35;

/// One outcome per episode that owns at least one scored window, in the
/// order of `episodes`. Per-episode F uses the episode's own windows as the
/// positive set and the participant's flagged normal windows ending within
/// +/-35 days of the assessment date as false positives.
OutcomeSummary episode_outcomes(std::span<const Detection> detections,
                                std::span<const Episode> episodes);

/// Larger of the two magnitude buckets.
Magnitude episode_magnitude(const Episode &episode);

struct Breakdown {
    std::map<std::string, AdjustedPRF> per_category;  // BOTH, PHQ_only, GAD_only
    std::map<std::string, AdjustedPRF> per_magnitude; // d5_9, d10_plus, PHQ/d5_9, ...
    std::map<std::string, std::size_t> episode_counts;
};

/// adjusted_prf restricted to the anomalous windows of each stratum's
/// episodes. The cohort-wide false positives are shared among strata in
/// proportion to each stratum's anomalous-window count.
Breakdown breakdown(std::span<const Detection> detections, std::span<const Episode> episodes);

/// Adjusted PRF restricted to windows touching `episode_ids`, with the
/// given false-positive charge.
AdjustedPRF stratum_prf(std::span<const Detection> detections,
                        const std::vector<std::string> &episode_ids, double false_positives);

struct AlignedAverage {
    int offset_day = 0;
    Feature feature = Feature::kSleep;
    double mean = 0.0;
    double sd = 0.0;
    std::size_t n = 0;

    [[nodiscard]] double ci95_half_width() const;
};

inline constexpr int kAlignedFirstOffset = -35;
inline constexpr int kAlignedLastOffset = 21;

/// Cross-episode mean of each normalized feature at every day offset from
/// the assessment date. Only observed (non-imputed) days contribute; offsets
/// with no observation are emitted with n = 0.
std::vector<AlignedAverage> aligned_averages(std::span<const ParticipantSeries> series,
                                             std::span<const Episode> episodes,
                                             int first_offset = kAlignedFirstOffset,
                                             int last_offset = kAlignedLastOffset);

} // namespace wearad
