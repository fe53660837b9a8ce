#include "wearad/error.hpp"
#include "wearad/explain.hpp"
#include "wearad/rng.hpp"

#include "test_helpers.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace wearad {
namespace {

using namespace wearad::testing;

constexpr int kRhr = static_cast<int>(Feature::kRestingHr);

BatchScorer square_of_cell_scorer(int day, int feature) {
    return [=](std::span<const WindowValues> b) {
        std::vector<double> out;
        for (const auto &w : b) {
            out.push_back(w(day, feature) * w(day, feature));
        }
        return out;
    };
}

TEST(Shapley, ConstantModelGivesZeroPhi) {
    Rng rng(1);
    const auto w = testing::random_window(rng);
    const auto bg = testing::random_windows(5, 2);
    for (const auto &opt : {exact_on(kSixPlayers), sampled_on({}, 50, 3)}) {
        const auto a = shapley_attributions(constant_scorer(0.7), w, bg, opt);
        for (double p : a.phi.cells) {
            EXPECT_EQ(p, 0.0);
        }
        EXPECT_DOUBLE_EQ(a.base_value, 0.7);
    }
}

TEST(Shapley, SquareOfSingleCell) {
    WindowValues w;
    w(3, kRhr) = 2.0;
    for (int d = 0; d < kWindowDays; ++d) {
        w(d, 0) = 1.0 + d;
    }
    const std::vector<WindowValues> bg{WindowValues{}};
    const auto a = shapley_attributions(square_of_cell_scorer(3, kRhr), w, bg, exact_on(kSixPlayers));
    for (int c = 0; c < kWindowCells; ++c) {
        EXPECT_NEAR(a.phi.cells[static_cast<std::size_t>(c)], c == cell(3, kRhr) ? 4.0 : 0.0, 1e-12) << c;
    }
    EXPECT_EQ(a.base_value, 0.0);
    EXPECT_NEAR(a.feature_importance[kRhr], 4.0, 1e-12);
}

TEST(Shapley, ExactEfficiencyOnModel) {
    const auto model = small_model();
    const auto scorer = model_scorer(model);
    const auto bg = testing::random_windows(10, 5);
    Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        const auto w = testing::random_window(rng, 2.0);
        const auto a = shapley_attributions(scorer, w, bg, exact_on(kSixPlayers));
        double sum = a.base_value;
        for (double p : a.phi.cells) {
            sum += p;
        }
        EXPECT_LT(std::abs(sum - reconstruction_error(model, w)), 1e-9);
        EXPECT_LT(std::abs(a.error - reconstruction_error(model, w)), 1e-12);
    }
}

TEST(Shapley, NullPlayerInExactAndSampledModes) {
    const auto model = small_model();
    const auto inner = model_scorer(model);
    // Ignores cell (1, RHR) by overwriting it before scoring.
    const BatchScorer scorer = [&](std::span<const WindowValues> b) {
        std::vector<WindowValues> copy(b.begin(), b.end());
        for (auto &w : copy) {
            w(1, kRhr) = 0.0;
        }
        return inner(copy);
    };
    const auto bg = testing::random_windows(8, 7);
    Rng rng(8);
    const auto w = testing::random_window(rng, 2.0);
    const auto exact = shapley_attributions(scorer, w, bg, exact_on(kSixPlayers));
    EXPECT_EQ(exact.phi(1, kRhr), 0.0);
    const auto sampled = shapley_attributions(scorer, w, bg, sampled_on(kSixPlayers, 500, 9));
    EXPECT_EQ(sampled.phi(1, kRhr), 0.0);
}

TEST(Shapley, SymmetricPlayersGetEqualPhi) {
    const BatchScorer scorer = [](std::span<const WindowValues> b) {
        std::vector<double> out;
        for (const auto &w : b) {
            out.push_back(w(0, 0) * w(6, 1) + 0.5 * w(3, 1));
        }
        return out;
    };
    WindowValues w;
    w(0, 0) = 3.0;
    w(6, 1) = 3.0;
    w(3, 1) = 1.0;
    const std::vector<WindowValues> bg{WindowValues{}};
    const auto a = shapley_attributions(scorer, w, bg, exact_on(kSixPlayers));
    EXPECT_EQ(a.phi(0, 0), a.phi(6, 1));
    EXPECT_DOUBLE_EQ(a.phi(0, 0), 4.5);
}

TEST(Shapley, SampledConvergesToExact) {
    const auto model = small_model();
    const auto scorer = model_scorer(model);
    const auto bg = testing::random_windows(20, 10);
    Rng rng(11);
    for (int trial = 0; trial < 3; ++trial) {
        const auto w = testing::random_window(rng, 2.0);
        const auto exact = shapley_attributions(scorer, w, bg, exact_on(kSixPlayers));
        const auto sampled = shapley_attributions(scorer, w, bg, sampled_on(kSixPlayers, 2000, 12 + trial));
        EXPECT_LT(max_deviation(exact, sampled), 0.05 * error_range(scorer, w, bg));
    }
}

TEST(Shapley, DoublingPermutationsReducesDeviationOnAverage) {
    const auto model = small_model();
    const auto scorer = model_scorer(model);
    const auto bg = testing::random_windows(20, 13);
    Rng rng(14);
    const auto w = testing::random_window(rng, 2.0);
    const auto exact = shapley_attributions(scorer, w, bg, exact_on(kSixPlayers));
    double prev = INFINITY;
    for (int m : {50, 100, 200, 400, 800}) {
        double mean = 0.0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            mean += max_deviation(exact, shapley_attributions(scorer, w, bg, sampled_on(kSixPlayers, m, seed)));
        }
        mean /= 10.0;
        EXPECT_LE(mean, prev) << m;
        prev = mean;
    }
}

TEST(Shapley, SampledEfficiencyAndDeterminism) {
    const auto model = small_model();
    const auto scorer = model_scorer(model);
    const auto bg = testing::random_windows(20, 15);
    Rng rng(16);
    const auto w = testing::random_window(rng);
    const auto a = shapley_attributions(scorer, w, bg, sampled_on({}, 40, 17));
    const auto b = shapley_attributions(scorer, w, bg, sampled_on({}, 40, 17));
    EXPECT_EQ(a.phi, b.phi);
    double sum = a.base_value;
    for (double p : a.phi.cells) {
        sum += p;
    }
    EXPECT_NEAR(sum, reconstruction_error(model, w), 1e-9);
    EXPECT_EQ(a.permutations, 40);
    EXPECT_EQ(a.background_size, 20U);
}

TEST(Shapley, Errors) {
    const auto w = WindowValues{};
    const std::vector<WindowValues> bg{WindowValues{}};
    EXPECT_THROW(shapley_attributions(constant_scorer(0), w, {}, exact_on(kSixPlayers)), Error);
    EXPECT_THROW(shapley_attributions(constant_scorer(0), w, bg, exact_on({})), Error);
    EXPECT_THROW(shapley_attributions(constant_scorer(0), w, bg, exact_on({0, 0})), Error);
    EXPECT_THROW(shapley_attributions(constant_scorer(0), w, bg, exact_on({21})), Error);
    EXPECT_THROW(shapley_attributions(constant_scorer(0), w, bg, sampled_on({}, 0, 1)), Error);
}

TEST(Shapley, WindowSeedDependsOnIdentity) {
    const Date d = Date::parse("2021-01-01");
    EXPECT_EQ(window_seed(1, "a", d), window_seed(1, "a", d));
    EXPECT_NE(window_seed(1, "a", d), window_seed(1, "b", d));
    EXPECT_NE(window_seed(1, "a", d), window_seed(1, "a", d + 1));
    EXPECT_NE(window_seed(1, "a", d), window_seed(2, "a", d));
}

AttributionMatrix with_importance(double sleep, double steps, double rhr) {
    AttributionMatrix a;
    a.feature_importance = {sleep, steps, rhr};
    return a;
}

TEST(Ranks, DescendingImportance) {
    const std::vector<AttributionMatrix> a{with_importance(0.1, 0.5, 0.9)};
    const auto r = episode_feature_ranks(a);
    EXPECT_EQ(r.rank[kRhr], 1);
    EXPECT_EQ(r.rank[static_cast<int>(Feature::kSteps)], 2);
    EXPECT_EQ(r.rank[static_cast<int>(Feature::kSleep)], 3);
}

TEST(Ranks, TieBrokenByFixedOrder) {
    const std::vector<AttributionMatrix> a{with_importance(0.1, 0.5, 0.5)};
    EXPECT_EQ(episode_feature_ranks(a).order[0], Feature::kRestingHr);
    const std::vector<AttributionMatrix> all_equal{with_importance(1, 1, 1)};
    const auto r = episode_feature_ranks(all_equal);
    EXPECT_EQ(r.order, kRankTieOrder);
}

TEST(Ranks, UsesMeanOverWindows) {
    const std::vector<AttributionMatrix> a{with_importance(0.0, 1.0, 0.0), with_importance(0.0, 0.0, 0.9)};
    const auto r = episode_feature_ranks(a);
    EXPECT_EQ(r.order[0], Feature::kSteps);
    EXPECT_DOUBLE_EQ(r.importance[kRhr], 0.45);
    EXPECT_THROW(episode_feature_ranks({}), Error);
}

TEST(RankTable, ColumnSumsEqualEpisodeCounts) {
    RankTable t;
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        t.add(static_cast<EpisodeCategory>(rng.integer(0, 2)),
              rank_importances({rng.uniform(), rng.uniform(), rng.uniform()}));
    }
    std::size_t total = 0;
    for (auto c : {EpisodeCategory::kBoth, EpisodeCategory::kPhqOnly, EpisodeCategory::kGadOnly}) {
        total += t.episodes(c);
        for (int rank = 0; rank < 3; ++rank) {
            std::size_t sum = 0;
            for (int f = 0; f < 3; ++f) {
                sum += t.counts(c)[static_cast<std::size_t>(f)][static_cast<std::size_t>(rank)];
            }
            EXPECT_EQ(sum, t.episodes(c));
        }
    }
    EXPECT_EQ(total, 50U);
    const auto slice = t.rank_slice(1);
    double s = 0.0;
    for (const auto &row : slice) {
        for (double x : row) {
            s += x;
        }
    }
    EXPECT_EQ(s, 50.0);
    EXPECT_THROW(t.rank_slice(4), Error);
    EXPECT_EQ(t.feature_slice(Feature::kSteps).size(), 3U);
}

TEST(ChiSquare, TailMatchesIntegrationOracle) {
    for (double x : {6.6667, 3.841, 0.5, 12.0}) {
        EXPECT_NEAR(chi_square_upper_tail(x, 1), chi2_df1_tail_oracle(x), 1e-6) << x;
    }
    EXPECT_NEAR(chi_square_upper_tail(3.841, 1), 0.0500, 5e-5);
    EXPECT_NEAR(chi_square_upper_tail(6.6667, 1), 0.00982, 5e-6);
    EXPECT_EQ(chi_square_upper_tail(0.0, 4), 1.0);
}

TEST(ChiSquare, TableExamples) {
    const auto zero = rank_distribution_test({{10, 10}, {10, 10}});
    EXPECT_EQ(zero.chi2, 0.0);
    EXPECT_EQ(zero.p, 1.0);
    const auto r = rank_distribution_test({{20, 10}, {10, 20}});
    EXPECT_NEAR(r.chi2, 6.6667, 1e-4);
    EXPECT_EQ(r.df, 1);
    EXPECT_NEAR(r.p, 0.00982, 5e-6);
    const auto three = rank_distribution_test({{5, 6, 7}, {8, 2, 9}, {4, 4, 4}});
    EXPECT_EQ(three.df, 4);
}

TEST(ChiSquare, ZeroExpectedCountAdvisesMerge) {
    try {
        rank_distribution_test({{0, 0}, {3, 4}});
        FAIL();
    } catch (const Error &e) {
        EXPECT_NE(std::string(e.what()).find("merge"), std::string::npos);
    }
}

TEST(TimeDynamic, SingleWindowLaysPhiOnDates) {
    AttributionMatrix a;
    a.participant_id = "p";
    a.end_date = Date{100};
    for (int c = 0; c < kWindowCells; ++c) {
        a.phi.cells[static_cast<std::size_t>(c)] = c;
    }
    const std::vector<AttributionMatrix> v{a};
    const auto pts = time_dynamic_export(v);
    ASSERT_EQ(pts.size(), 21U);
    for (const auto &p : pts) {
        const int day = p.date - Date{94};
        EXPECT_EQ(p.phi, a.phi(day, static_cast<int>(p.feature)));
        EXPECT_EQ(p.windows, 1U);
    }
}

TEST(TimeDynamic, OverlapOfEqualPhiUnchanged) {
    AttributionMatrix a;
    a.participant_id = "p";
    a.end_date = Date{100};
    a.phi.cells.fill(0.25);
    AttributionMatrix b = a;
    b.end_date = Date{101};
    const std::vector<AttributionMatrix> v{a, b};
    const auto pts = time_dynamic_export(v);
    ASSERT_EQ(pts.size(), 8U * 3U);
    for (const auto &p : pts) {
        EXPECT_EQ(p.phi, 0.25);
        const bool overlap = p.date >= Date{95} && p.date <= Date{100};
        EXPECT_EQ(p.windows, overlap ? 2U : 1U);
    }
}

} // namespace
} // namespace wearad
