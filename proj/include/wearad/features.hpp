#pragma once

#include "wearad/cohort.hpp"
#include "wearad/labeling.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wearad {

/// Column order of every 7 x 3 window.
enum class Feature : int { kSleep = 0, kSteps = 1, kRestingHr = 2 };

inline constexpr int kFeatureCount = 3;
inline constexpr int kWindowDays = 7;
inline constexpr int kWindowCells = kWindowDays * kFeatureCount;

inline constexpr std::array<Feature, kFeatureCount> kAllFeatures{
    Feature::kSleep, Feature::kSteps, Feature::kRestingHr};

std::string_view to_string(Feature feature);
Feature feature_from_string(std::string_view text);

struct FeatureConfig {
    double max_missing_fraction = 0.2; // per-day minute coverage gate
    int resting_run_minutes = 12;
    double max_window_missing_fraction = 0.2; // training windows: strictly less

    void validate() const;
};

struct DailyFeatures {
    Date date;
    std::optional<double> sleep_minutes;
    std::optional<double> total_steps;
    std::optional<double> resting_hr;
    bool quality_ok = false;

    [[nodiscard]] std::optional<double> get(Feature f) const;
    void set(Feature f, std::optional<double> value);

    bool operator==(const DailyFeatures &) const = default;
};

/// Minutes in light, deep or REM sleep; missing when the day carries no
/// sleep-stage data at all.
std::optional<double> sleep_duration(std::span<const MinuteRecord> day);

/// Sum of present step values; missing only when every minute is missing.
std::optional<double> total_steps(std::span<const MinuteRecord> day);

/// Mean heart rate over the union of all runs of at least `min_run`
/// consecutive zero-step minutes. Missing or absent step minutes break runs.
std::optional<double> resting_heart_rate(std::span<const MinuteRecord> day, int min_run = 12);

/// True iff step and heart-rate minute coverage are each at least
/// (1 - max_missing_fraction) of a full day.
bool day_quality(std::span<const MinuteRecord> day, double max_missing_fraction = 0.2);

/// One DailyFeatures per calendar day in `calendar`. Days failing the
/// quality gate have every feature set missing.
std::vector<DailyFeatures> extract_daily(std::span<const MinuteRecord> minutes,
                                         DateInterval calendar, const FeatureConfig &config = {});

/// Calendar spanned by a participant's minute records.
std::optional<DateInterval> minute_calendar(std::span<const MinuteRecord> minutes);

/// Linear interpolation between present neighbours, nearest-value hold at
/// the edges. Throws wearad::Error when every entry is missing.
std::vector<double> impute_linear(std::span<const std::optional<double>> series);

struct FeatureMoments {
    double mean = 0.0;
    double std = 0.0; // population
};

struct NormalizationConstants {
    std::array<FeatureMoments, kFeatureCount> features{};

    [[nodiscard]] const FeatureMoments &operator[](Feature f) const {
        return features[static_cast<int>(f)];
    }
    FeatureMoments &operator[](Feature f) { return features[static_cast<int>(f)]; }
};

/// Mean and population std of each feature over present values on
/// quality-passing days.
NormalizationConstants compute_normalization(std::span<const DailyFeatures> daily);

/// (x - mean) / std; zero everywhere when std == 0.
std::vector<double> normalize_series(std::span<const double> series, const FeatureMoments &moments);

/// 7 x 3 window values, row-major [day][feature].
struct WindowValues {
    std::array<double, kWindowCells> cells{};

    double &operator()(int day, int feature) { return cells[day * kFeatureCount + feature]; }
    double operator()(int day, int feature) const { return cells[day * kFeatureCount + feature]; }

    bool operator==(const WindowValues &) const = default;
};

struct Window {
    std::string participant_id;
    Date end_date;
    WindowValues values;
    DayLabel label = DayLabel::kAmbiguous;
    std::vector<std::string> episode_ids;
    int missing_cells = 0; // before imputation

    [[nodiscard]] Date start_date() const { return end_date - (kWindowDays - 1); }
};

/// Normalized, imputed daily matrix for one participant.
struct ParticipantSeries {
    std::string participant_id;
    Date first_date;
    std::vector<std::array<double, kFeatureCount>> values;
    std::vector<std::uint8_t> imputed_mask; // bit f set when feature f was imputed
    NormalizationConstants constants;

    [[nodiscard]] std::size_t days() const { return values.size(); }
};

/// Imputes and z-scores the three feature columns. Returns nullopt when a
/// feature has no present value at all.
std::optional<ParticipantSeries> prepare_series(std::string_view participant_id,
                                                std::span<const DailyFeatures> daily);

/// One window per day with six preceding days available. `labels` must
/// cover the same contiguous calendar as `series`.
std::vector<Window> make_windows(const ParticipantSeries &series,
                                 std::span<const LabeledDay> labels);

/// Normal-eligible windows with missing fraction strictly below the limit.
bool is_training_window(const Window &window, const FeatureConfig &config = {});

} // namespace wearad
