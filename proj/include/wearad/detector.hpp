#pragma once

#include "wearad/features.hpp"
#include "wearad/lstm_ae.hpp"

#include <span>
#include <string>
#include <vector>

namespace wearad {

struct Detection {
    std::string participant_id;
    Date end_date;
    double error = 0.0;
    double threshold = 0.0;
    bool flagged = false;
    DayLabel label = DayLabel::kAmbiguous;
    std::vector<std::string> episode_ids;

    bool operator==(const Detection &) const = default;
};

/// Inclusive linear-interpolation percentile: rank p/100 * (n - 1) between
/// order statistics. The 100th percentile is exactly the maximum. Throws on
/// an empty list or a percentile outside [0, 100].
double select_threshold(std::span<const double> validation_errors, double percentile);

/// Strict inequality: an error equal to the threshold is not flagged.
constexpr bool is_flagged(double error, double threshold) noexcept { return error > threshold; }

/// Scores every window and flags those whose error exceeds `threshold`.
std::vector<Detection> detect(const LstmAutoencoder &model, std::span<const Window> windows,
                              double threshold);

/// Same, from precomputed errors aligned with `windows`.
std::vector<Detection> detect(std::span<const Window> windows, std::span<const double> errors,
                              double threshold);

} // namespace wearad
