#include "wearad/detector.hpp"

#include "wearad/error.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace wearad {

double select_threshold(std::span<const double> validation_errors, double percentile) {
    if (validation_errors.empty()) {
        throw Error("cannot select a threshold from an empty error list");
    }
    if (!(percentile >= 0.0 && percentile <= 100.0)) {
        throw Error(fmt::format("percentile {} outside [0, 100]", percentile));
    }
    std::vector<double> sorted(validation_errors.begin(), validation_errors.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = sorted.size();
    if (percentile == 100.0) {
        return sorted.back();
    }
    const double rank = percentile / 100.0 * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, n - 1);
    const double frac = rank - static_cast<double>(lo);
    if (frac == 0.0 || lo == hi) {
        return sorted[lo];
    }
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<Detection> detect(std::span<const Window> windows, std::span<const double> errors,
                              double threshold) {
    if (windows.size() != errors.size()) {
        throw Error("window and error counts differ");
    }
    std::vector<Detection> out;
    out.reserve(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto &w = windows[i];
        out.push_back({w.participant_id, w.end_date, errors[i], threshold,
                       is_flagged(errors[i], threshold), w.label, w.episode_ids});
    }
    return out;
}

std::vector<Detection> detect(const LstmAutoencoder &model, std::span<const Window> windows,
                              double threshold) {
    std::vector<WindowValues> values;
    values.reserve(windows.size());
    for (const auto &w : windows) {
        values.push_back(w.values);
    }
    const auto errors = reconstruction_errors(model, values);
    return detect(windows, errors, threshold);
}

} // namespace wearad
