#pragma once

#include "wearad/detector.hpp"
#include "wearad/features.hpp"
#include "wearad/labeling.hpp"
#include "wearad/lstm_ae.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace wearad {

/// Scores a batch of windows; must be deterministic and thread-safe.
using BatchScorer = std::function<std::vector<double>(std::span<const WindowValues>)>;

/// Reconstruction error of `model`, evaluated serially so that callers can
/// parallelise across windows.
BatchScorer model_scorer(const LstmAutoencoder &model);

enum class ShapleyMode { kExact, kSampled };

std::string_view to_string(ShapleyMode mode);

inline constexpr int kMaxExactPlayers = 16;

struct ShapleyOptions {
    ShapleyMode mode = ShapleyMode::kSampled;
    int permutations = 200;
    std::uint64_t seed = 0;
    /// Cell indices (day * 3 + feature) acting as players; empty means all
    /// 21 cells. Non-player cells always keep the explained window's value.
    std::vector<int> players;
};

struct AttributionMatrix {
    std::string participant_id;
    Date end_date;
    WindowValues phi;         // zero for non-player cells
    double base_value = 0.0;  // value of the empty coalition
    double error = 0.0;       // value of the grand coalition
    std::array<double, kFeatureCount> feature_importance{}; // sum over days of |phi|
    ShapleyMode mode = ShapleyMode::kSampled;
    int permutations = 0;
    std::size_t background_size = 0;
    std::uint64_t seed = 0;
};

/// Shapley values of the cell game v(S) = mean over background windows b of
/// score(window with player cells outside S taken from b). Exact mode
/// enumerates every coalition (at most 16 players); sampled mode averages
/// marginal contributions along seeded random permutations, pairing each
/// permutation with one background window in a seeded cyclic order.
/// Throws on an empty background, bad player indices, or too many players
/// for exact mode.
AttributionMatrix shapley_attributions(const BatchScorer &scorer, const WindowValues &window,
                                       std::span<const WindowValues> background,
                                       const ShapleyOptions &options);

/// Seed for one window, derived from the global seed and the window's
/// identity so results do not depend on scheduling.
std::uint64_t window_seed(std::uint64_t seed, std::string_view participant_id, Date end_date);

struct FeatureRanking {
    std::array<double, kFeatureCount> importance{}; // indexed by Feature
    std::array<int, kFeatureCount> rank{};          // 1 = most important, indexed by Feature
    std::array<Feature, kFeatureCount> order{};     // features from rank 1 to 3
};

/// Fixed order that breaks exact importance ties.
inline constexpr std::array<Feature, kFeatureCount> kRankTieOrder{
    Feature::kRestingHr, Feature::kSteps, Feature::kSleep};

/// Ranks features by the mean per-window importance over an episode's
/// attributed windows. Throws when `attributions` is empty.
FeatureRanking episode_feature_ranks(std::span<const AttributionMatrix> attributions);

FeatureRanking rank_importances(const std::array<double, kFeatureCount> &importance);

/// Per category, how many episodes placed each feature at each rank.
class RankTable {
public:
    void add(EpisodeCategory category, const FeatureRanking &ranking);

    /// counts[feature][rank - 1]
    [[nodiscard]] const std::array<std::array<std::size_t, kFeatureCount>, kFeatureCount> &
    counts(EpisodeCategory category) const;

    [[nodiscard]] std::size_t episodes(EpisodeCategory category) const;

    /// Rows: categories (BOTH, PHQ_only, GAD_only); columns: features in
    /// storage order; entries: episodes placing that feature at `rank`.
    [[nodiscard]] std::vector<std::vector<double>> rank_slice(int rank) const;

    /// Rows: ranks 1..3; columns: categories; entries: episodes placing
    /// `feature` at each rank.
    [[nodiscard]] std::vector<std::vector<double>> feature_slice(Feature feature) const;

private:
    std::map<EpisodeCategory, std::array<std::array<std::size_t, kFeatureCount>, kFeatureCount>>
        counts_;
    std::map<EpisodeCategory, std::size_t> episodes_;
};

struct ChiSquareResult {
    double chi2 = 0.0;
    int df = 0;
    double p = 1.0;
};

/// Upper tail P(X > x) of the chi-square distribution, through the
/// regularized upper incomplete gamma function Q(df/2, x/2).
double chi_square_upper_tail(double x, int df);

/// Pearson test of independence on a contingency table; expected counts
/// come from the margins. Throws when any expected count is zero.
ChiSquareResult rank_distribution_test(const std::vector<std::vector<double>> &table);

struct TimeDynamicPoint {
    std::string participant_id;
    Date date;
    Feature feature = Feature::kSleep;
    double phi = 0.0;    // mean over covering windows at the matching position
    std::size_t windows = 0;
};

/// Lays each window's phi matrix onto its seven calendar days and averages
/// overlapping windows. Output is sorted by participant, date, feature.
std::vector<TimeDynamicPoint> time_dynamic_export(std::span<const AttributionMatrix> attributions);

} // namespace wearad
