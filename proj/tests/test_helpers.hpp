#pragma once

#include "wearad/features.hpp"
#include "wearad/rng.hpp"

#include <vector>

namespace wearad::testing {

inline WindowValues random_window(Rng &rng, double scale = 1.0) {
    WindowValues w;
    for (auto &v : w.cells) {
        v = scale * rng.normal();
    }
    return w;
}

inline std::vector<WindowValues> random_windows(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<WindowValues> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(random_window(rng));
    }
    return out;
}

} // namespace wearad::testing
