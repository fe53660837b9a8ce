#include "wearad/explain.hpp"

#include "wearad/error.hpp"
#include "wearad/rng.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <tuple>

#include <boost/math/special_functions/gamma.hpp>
#include <fmt/format.h>

namespace wearad {

namespace {

// Upper bound on composite windows scored per scorer call in exact mode.
constexpr std::size_t kExactBatchWindows = 8192;

std::vector<int> resolve_players(const ShapleyOptions &options) {
    std::vector<int> players = options.players;
    if (players.empty()) {
        players.resize(kWindowCells);
        std::iota(players.begin(), players.end(), 0);
    }
    std::vector<int> sorted = players;
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() < 0 || sorted.back() >= kWindowCells ||
        std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw Error("players must be distinct cell indices in [0, 21)");
    }
    return players;
}

std::vector<double> score_checked(const BatchScorer &scorer, std::span<const WindowValues> batch) {
    auto scores = scorer(batch);
    if (scores.size() != batch.size()) {
        throw Error("scorer returned the wrong number of scores");
    }
    return scores;
}

void exact_values(const BatchScorer &scorer, const WindowValues &window,
                  std::span<const WindowValues> background, const std::vector<int> &players,
                  std::vector<double> &values) {
    const std::size_t k = players.size();
    const std::size_t coalitions = std::size_t{1} << k;
    const std::size_t b_count = background.size();
    const std::size_t per_block = std::max<std::size_t>(1, kExactBatchWindows / b_count);
    values.assign(coalitions, 0.0);

    std::vector<WindowValues> batch;
    for (std::size_t first = 0; first < coalitions; first += per_block) {
        const std::size_t last = std::min(coalitions, first + per_block);
        batch.clear();
        for (std::size_t mask = first; mask < last; ++mask) {
            for (const auto &b : background) {
                WindowValues w = window;
                for (std::size_t p = 0; p < k; ++p) {
                    if ((mask & (std::size_t{1} << p)) == 0) {
                        const auto cell = static_cast<std::size_t>(players[p]);
                        w.cells[cell] = b.cells[cell];
                    }
                }
                batch.push_back(w);
            }
        }
        const auto scores = score_checked(scorer, batch);
        for (std::size_t mask = first; mask < last; ++mask) {
            double sum = 0.0;
            for (std::size_t j = 0; j < b_count; ++j) {
                sum += scores[(mask - first) * b_count + j];
            }
            values[mask] = sum / static_cast<double>(b_count);
        }
    }
}

void exact_shapley(const BatchScorer &scorer, const WindowValues &window,
                   std::span<const WindowValues> background, const std::vector<int> &players,
                   AttributionMatrix &out) {
    const std::size_t k = players.size();
    std::vector<double> v;
    exact_values(scorer, window, background, players, v);

    // weight[s] = s! (k - s - 1)! / k!
    std::vector<double> factorial(k + 1, 1.0);
    for (std::size_t i = 1; i <= k; ++i) {
        factorial[i] = factorial[i - 1] * static_cast<double>(i);
    }
    std::vector<double> weight(k, 0.0);
    for (std::size_t s = 0; s < k; ++s) {
        weight[s] = factorial[s] * factorial[k - s - 1] / factorial[k];
    }

    for (std::size_t p = 0; p < k; ++p) {
        const std::size_t bit = std::size_t{1} << p;
        double phi = 0.0;
        for (std::size_t mask = 0; mask < v.size(); ++mask) {
            if ((mask & bit) == 0) {
                phi += weight[static_cast<std::size_t>(std::popcount(mask))] * (v[mask | bit] - v[mask]);
            }
        }
        out.phi.cells[static_cast<std::size_t>(players[p])] = phi;
    }
    out.base_value = v.front();
    out.error = v.back();
}

void sampled_shapley(const BatchScorer &scorer, const WindowValues &window,
                     std::span<const WindowValues> background, const std::vector<int> &players,
                     int permutations, std::uint64_t seed, AttributionMatrix &out) {
    Rng rng(seed);
    std::vector<std::size_t> background_order(background.size());
    std::iota(background_order.begin(), background_order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(background_order));

    const std::size_t k = players.size();
    const auto m_count = static_cast<std::size_t>(permutations);
    std::vector<std::vector<int>> orders(m_count);
    std::vector<WindowValues> batch;
    batch.reserve(m_count * (k + 1));
    for (std::size_t m = 0; m < m_count; ++m) {
        auto &order = orders[m];
        order.resize(k);
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(std::span<int>(order));
        const auto &b = background[background_order[m % background_order.size()]];
        WindowValues w = window;
        for (int cell : players) {
            w.cells[static_cast<std::size_t>(cell)] = b.cells[static_cast<std::size_t>(cell)];
        }
        batch.push_back(w);
        for (int p : order) {
            const auto cell = static_cast<std::size_t>(players[static_cast<std::size_t>(p)]);
            w.cells[cell] = window.cells[cell];
            batch.push_back(w);
        }
    }
    const auto scores = score_checked(scorer, batch);

    std::vector<double> phi(k, 0.0);
    double base = 0.0;
    double full = 0.0;
    for (std::size_t m = 0; m < m_count; ++m) {
        const double *v = &scores[m * (k + 1)];
        base += v[0];
        full += v[k];
        for (std::size_t j = 0; j < k; ++j) {
            phi[static_cast<std::size_t>(orders[m][j])] += v[j + 1] - v[j];
        }
    }
    const double inv = 1.0 / static_cast<double>(m_count);
    for (std::size_t p = 0; p < k; ++p) {
        out.phi.cells[static_cast<std::size_t>(players[p])] = phi[p] * inv;
    }
    out.base_value = base * inv;
    out.error = full * inv;
}

} // namespace

std::string_view to_string(ShapleyMode mode) {
    return mode == ShapleyMode::kExact ? "exact" : "sampled";
}

BatchScorer model_scorer(const LstmAutoencoder &model) {
    return [&model](std::span<const WindowValues> batch) {
        std::vector<double> errors(batch.size(), 0.0);
        for (std::size_t begin = 0; begin < batch.size(); begin += kernels::kChunkWindows) {
            const auto len = std::min(kernels::kChunkWindows, batch.size() - begin);
            kernels::chunk_loss_and_gradient(model.params, model.activation(),
                                             batch.subspan(begin, len), nullptr,
                                             std::span<double>(errors).subspan(begin, len));
        }
        return errors;
    };
}

AttributionMatrix shapley_attributions(const BatchScorer &scorer, const WindowValues &window,
                                       std::span<const WindowValues> background,
                                       const ShapleyOptions &options) {
    if (background.empty()) {
        throw Error("Shapley attribution needs a non-empty background set");
    }
    const auto players = resolve_players(options);
    AttributionMatrix out;
    out.mode = options.mode;
    out.background_size = background.size();
    out.seed = options.seed;
    if (options.mode == ShapleyMode::kExact) {
        if (players.size() > static_cast<std::size_t>(kMaxExactPlayers)) {
            throw Error(fmt::format("exact Shapley enumeration supports at most {} players, got {}",
                                    kMaxExactPlayers, players.size()));
        }
        exact_shapley(scorer, window, background, players, out);
    } else {
        if (options.permutations < 1) {
            throw Error("sampled Shapley needs at least one permutation");
        }
        out.permutations = options.permutations;
        sampled_shapley(scorer, window, background, players, options.permutations, options.seed,
                        out);
    }
    for (int d = 0; d < kWindowDays; ++d) {
        for (int f = 0; f < kFeatureCount; ++f) {
            out.feature_importance[static_cast<std::size_t>(f)] += std::abs(out.phi(d, f));
        }
    }
    return out;
}

std::uint64_t window_seed(std::uint64_t seed, std::string_view participant_id, Date end_date) {
    const auto key = fmt::format("{}@{}", participant_id, end_date.iso());
    return derive_seed(seed, fnv1a(key));
}

FeatureRanking rank_importances(const std::array<double, kFeatureCount> &importance) {
    FeatureRanking r;
    r.importance = importance;
    r.order = kRankTieOrder;
    std::stable_sort(r.order.begin(), r.order.end(), [&](Feature a, Feature b) {
        return importance[static_cast<std::size_t>(a)] > importance[static_cast<std::size_t>(b)];
    });
    for (int i = 0; i < kFeatureCount; ++i) {
        r.rank[static_cast<std::size_t>(r.order[static_cast<std::size_t>(i)])] = i + 1;
    }
    return r;
}

FeatureRanking episode_feature_ranks(std::span<const AttributionMatrix> attributions) {
    if (attributions.empty()) {
        throw Error("an episode ranking needs at least one attributed window");
    }
    std::array<double, kFeatureCount> mean{};
    for (const auto &a : attributions) {
        for (std::size_t f = 0; f < mean.size(); ++f) {
            mean[f] += a.feature_importance[f];
        }
    }
    for (auto &m : mean) {
        m /= static_cast<double>(attributions.size());
    }
    return rank_importances(mean);
}

void RankTable::add(EpisodeCategory category, const FeatureRanking &ranking) {
    auto &c = counts_[category];
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        ++c[f][static_cast<std::size_t>(ranking.rank[f] - 1)];
    }
    ++episodes_[category];
}

const std::array<std::array<std::size_t, kFeatureCount>, kFeatureCount> &
RankTable::counts(EpisodeCategory category) const {
    static const std::array<std::array<std::size_t, kFeatureCount>, kFeatureCount> empty{};
    const auto it = counts_.find(category);
    return it == counts_.end() ? empty : it->second;
}

std::size_t RankTable::episodes(EpisodeCategory category) const {
    const auto it = episodes_.find(category);
    return it == episodes_.end() ? 0 : it->second;
}

std::vector<std::vector<double>> RankTable::rank_slice(int rank) const {
    if (rank < 1 || rank > kFeatureCount) {
        throw Error(fmt::format("rank {} outside 1..3", rank));
    }
    std::vector<std::vector<double>> table;
    for (auto c : {EpisodeCategory::kBoth, EpisodeCategory::kPhqOnly, EpisodeCategory::kGadOnly}) {
        std::vector<double> row;
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            row.push_back(static_cast<double>(counts(c)[f][static_cast<std::size_t>(rank - 1)]));
        }
        table.push_back(std::move(row));
    }
    return table;
}

std::vector<std::vector<double>> RankTable::feature_slice(Feature feature) const {
    std::vector<std::vector<double>> table(kFeatureCount);
    for (auto c : {EpisodeCategory::kBoth, EpisodeCategory::kPhqOnly, EpisodeCategory::kGadOnly}) {
        for (std::size_t r = 0; r < kFeatureCount; ++r) {
            table[r].push_back(static_cast<double>(counts(c)[static_cast<std::size_t>(feature)][r]));
        }
    }
    return table;
}

double chi_square_upper_tail(double x, int df) {
    if (df < 1) {
        throw Error(fmt::format("chi-square degrees of freedom must be positive, got {}", df));
    }
    if (!(x >= 0.0)) {
        throw Error("chi-square statistic must be non-negative");
    }
    return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

ChiSquareResult rank_distribution_test(const std::vector<std::vector<double>> &table) {
    const std::size_t rows = table.size();
    const std::size_t cols = rows == 0 ? 0 : table.front().size();
    if (rows < 2 || cols < 2) {
        throw Error("a chi-square test needs at least a 2 x 2 table");
    }
    std::vector<double> row_sum(rows, 0.0);
    std::vector<double> col_sum(cols, 0.0);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (table[r].size() != cols) {
            throw Error("contingency table rows differ in length");
        }
        for (std::size_t c = 0; c < cols; ++c) {
            if (!(table[r][c] >= 0.0)) {
                throw Error("contingency table counts must be non-negative");
            }
            row_sum[r] += table[r][c];
            col_sum[c] += table[r][c];
            total += table[r][c];
        }
    }
    ChiSquareResult out;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double expected = total > 0.0 ? row_sum[r] * col_sum[c] / total : 0.0;
            if (!(expected > 0.0)) {
                throw Error(fmt::format(
                    "expected count is zero in cell ({}, {}); merge sparse categories or ranks "
                    "before testing",
                    r, c));
            }
            const double d = table[r][c] - expected;
            out.chi2 += d * d / expected;
        }
    }
    out.df = static_cast<int>((rows - 1) * (cols - 1));
    out.p = chi_square_upper_tail(out.chi2, out.df);
    return out;
}

std::vector<TimeDynamicPoint> time_dynamic_export(std::span<const AttributionMatrix> attributions) {
    std::map<std::tuple<std::string, std::int32_t, int>, std::pair<double, std::size_t>> acc;
    for (const auto &a : attributions) {
        const Date start = a.end_date - (kWindowDays - 1);
        for (int d = 0; d < kWindowDays; ++d) {
            for (int f = 0; f < kFeatureCount; ++f) {
                auto &slot = acc[{a.participant_id, (start + d).days(), f}];
                slot.first += a.phi(d, f);
                ++slot.second;
            }
        }
    }
    std::vector<TimeDynamicPoint> out;
    out.reserve(acc.size());
    for (const auto &[key, value] : acc) {
        TimeDynamicPoint p;
        p.participant_id = std::get<0>(key);
        p.date = Date{std::get<1>(key)};
        p.feature = static_cast<Feature>(std::get<2>(key));
        p.phi = value.first / static_cast<double>(value.second);
        p.windows = value.second;
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace wearad
