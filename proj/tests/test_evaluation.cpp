#include "wearad/evaluation.hpp"
#include "wearad/rng.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace wearad {
namespace {

using namespace wearad::testing;

TEST(AdjustedPrf, HandExample) {
    const auto r = adjusted_prf(hand_example());
    EXPECT_EQ(r.tp, 5U);
    EXPECT_EQ(r.fp, 1.0);
    EXPECT_EQ(r.fn, 3U);
    EXPECT_NEAR(r.precision, 0.8333, 5e-5);
    EXPECT_NEAR(r.recall, 0.625, 5e-5);
    EXPECT_NEAR(r.f_score, 0.7143, 5e-5);
}

TEST(AdjustedPrf, PerfectDetection) {
    auto d = hand_example();
    for (auto &x : d) {
        x.flagged = x.label == DayLabel::kAnomalous && (x.end_date.days() == 1 || x.end_date.days() == 9);
    }
    const auto r = adjusted_prf(d);
    EXPECT_EQ(r.precision, 1.0);
    EXPECT_EQ(r.recall, 1.0);
    EXPECT_EQ(r.f_score, 1.0);
}

TEST(AdjustedPrf, NoFlags) {
    auto d = hand_example();
    for (auto &x : d) {
        x.flagged = false;
    }
    const auto r = adjusted_prf(d);
    EXPECT_EQ(r.recall, 0.0);
    EXPECT_EQ(r.f_score, 0.0);
    EXPECT_EQ(r.precision, 0.0);
}

TEST(AdjustedPrf, AmbiguousWindowsIgnored) {
    auto d = hand_example();
    d.push_back(window_at(20, DayLabel::kAmbiguous, {}, true));
    EXPECT_EQ(adjusted_prf(d), adjusted_prf(hand_example()));
}

TEST(AdjustedPrf, MatchesNaiveEnumeration) {
    Rng rng(77);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto d = random_pattern(rng);
        ASSERT_EQ(adjusted_prf(d), naive_prf(d)) << trial;
    }
}

TEST(AdjustedPrf, MonotoneUnderExtraFlags) {
    Rng rng(78);
    for (int trial = 0; trial < 300; ++trial) {
        auto d = random_pattern(rng);
        const auto before = adjusted_prf(d);
        const auto i = rng.below(d.size());
        if (d[i].flagged) {
            continue;
        }
        d[i].flagged = true;
        const auto after = adjusted_prf(d);
        EXPECT_GE(after.recall, before.recall);
        if (d[i].label == DayLabel::kNormalEligible) {
            EXPECT_LE(after.precision, before.precision);
        }
    }
}

Episode make_episode(const std::string &pid, int day, EpisodeCategory c, Magnitude phq,
                     Magnitude gad) {
    Episode e;
    e.participant_id = pid;
    e.assessment_date = Date{day};
    e.category = c;
    e.magnitude_phq = phq;
    e.magnitude_gad = gad;
    e.period_start = Date{day - 21};
    e.period_end = Date{day + 14};
    return e;
}

TEST(EpisodeOutcomes, DetectionRateAndLocalFalsePositives) {
    const auto a = make_episode("p", 100, EpisodeCategory::kBoth, Magnitude::kD5to9, Magnitude::kD5to9);
    const auto b = make_episode("p", 300, EpisodeCategory::kPhqOnly, Magnitude::kD10Plus, Magnitude::kNone);
    std::vector<Detection> d;
    for (int i = 90; i < 110; ++i) {
        d.push_back(window_at(i, DayLabel::kAnomalous, {a.id()}, i == 95));
    }
    for (int i = 290; i < 310; ++i) {
        d.push_back(window_at(i, DayLabel::kAnomalous, {b.id()}, false));
    }
    d.push_back(window_at(60, DayLabel::kNormalEligible, {}, true));  // 40 days before a: outside
    d.push_back(window_at(130, DayLabel::kNormalEligible, {}, true)); // 30 days after a: local
    d.push_back(window_at(131, DayLabel::kNormalEligible, {}, true, "other"));
    const std::vector<Episode> eps{a, b};
    const auto s = episode_outcomes(d, eps);
    ASSERT_EQ(s.outcomes.size(), 2U);
    EXPECT_TRUE(s.outcomes[0].detected);
    EXPECT_EQ(s.outcomes[0].local_false_positives, 1U);
    EXPECT_EQ(s.outcomes[0].windows, 20U);
    EXPECT_EQ(s.outcomes[0].flagged_windows, 1U);
    EXPECT_NEAR(s.outcomes[0].f_score, 2.0 * (20.0 / 21.0) / (20.0 / 21.0 + 1.0), 1e-15);
    EXPECT_FALSE(s.outcomes[1].detected);
    EXPECT_EQ(s.outcomes[1].f_score, 0.0);
    ASSERT_TRUE(s.detection_rate.has_value());
    EXPECT_EQ(*s.detection_rate, 0.5);
}

TEST(EpisodeOutcomes, NoEpisodesIsNotApplicable) {
    const std::vector<Detection> d{window_at(1, DayLabel::kNormalEligible, {}, true)};
    const auto s = episode_outcomes(d, {});
    EXPECT_TRUE(s.outcomes.empty());
    EXPECT_FALSE(s.detection_rate.has_value());
}

TEST(EpisodeOutcomes, AllDetected) {
    const auto a = make_episode("p", 100, EpisodeCategory::kBoth, Magnitude::kD5to9, Magnitude::kD5to9);
    const std::vector<Detection> d{window_at(100, DayLabel::kAnomalous, {a.id()}, true)};
    const std::vector<Episode> eps{a};
    EXPECT_EQ(*episode_outcomes(d, eps).detection_rate, 1.0);
}

TEST(Breakdown, IdenticalStrataGiveIdenticalPrf) {
    std::vector<Episode> eps;
    std::vector<Detection> d;
    const EpisodeCategory cats[] = {EpisodeCategory::kBoth, EpisodeCategory::kPhqOnly,
                                    EpisodeCategory::kGadOnly};
    for (int k = 0; k < 3; ++k) {
        for (int rep = 0; rep < 2; ++rep) {
            const int base = 1000 * k + 100 * rep;
            const auto e = make_episode("p", base, cats[k], Magnitude::kD5to9, Magnitude::kNone);
            eps.push_back(e);
            for (int i = 0; i < 10; ++i) {
                d.push_back(window_at(base + i, DayLabel::kAnomalous, {e.id()}, rep == 0 && i == 3));
            }
        }
    }
    for (int i = 0; i < 6; ++i) {
        d.push_back(window_at(5000 + i, DayLabel::kNormalEligible, {}, i < 3));
    }
    const auto b = breakdown(d, eps);
    const auto &both = b.per_category.at("BOTH");
    EXPECT_EQ(both, b.per_category.at("PHQ_only"));
    EXPECT_EQ(both, b.per_category.at("GAD_only"));
    EXPECT_EQ(both.tp, 10U);
    EXPECT_EQ(both.fn, 10U);
    EXPECT_DOUBLE_EQ(both.fp, 1.0); // 3 false positives shared over three equal strata
    EXPECT_EQ(b.episode_counts.at("BOTH"), 2U);
    EXPECT_EQ(b.per_magnitude.at("d5_9"), adjusted_prf(d));
    EXPECT_EQ(b.per_magnitude.at("d10_plus").tp + b.per_magnitude.at("d10_plus").fn, 0U);
}

TEST(Breakdown, CategoryCountsSumToTotal) {
    Rng rng(5);
    std::vector<Episode> eps;
    for (int i = 0; i < 40; ++i) {
        eps.push_back(make_episode("p" + std::to_string(i), 100,
                                   static_cast<EpisodeCategory>(rng.integer(0, 2)),
                                   Magnitude::kD5to9, Magnitude::kD10Plus));
    }
    const auto b = breakdown({}, eps);
    EXPECT_EQ(b.episode_counts.at("BOTH") + b.episode_counts.at("PHQ_only") +
                  b.episode_counts.at("GAD_only"),
              40U);
    EXPECT_EQ(b.episode_counts.at("d10_plus"), 40U);
}

ParticipantSeries constant_series(const std::string &pid, int first, int days, double value) {
    ParticipantSeries s;
    s.participant_id = pid;
    s.first_date = Date{first};
    s.values.assign(static_cast<std::size_t>(days), {value, value, value});
    s.imputed_mask.assign(static_cast<std::size_t>(days), 0);
    return s;
}

TEST(AlignedAverages, ConstantFeaturesGiveFlatZero) {
    const std::vector<ParticipantSeries> series{constant_series("a", 0, 200, 0.0),
                                                constant_series("b", 0, 200, 0.0)};
    const std::vector<Episode> eps{
        make_episode("a", 100, EpisodeCategory::kBoth, Magnitude::kD5to9, Magnitude::kD5to9),
        make_episode("b", 120, EpisodeCategory::kBoth, Magnitude::kD5to9, Magnitude::kD5to9)};
    const auto avg = aligned_averages(series, eps);
    ASSERT_EQ(avg.size(), 57U * 3U);
    for (const auto &a : avg) {
        EXPECT_EQ(a.mean, 0.0);
        EXPECT_EQ(a.n, 2U);
    }
}

TEST(AlignedAverages, SingleEpisodeReproducesItsSeries) {
    auto s = constant_series("a", 0, 200, 0.0);
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        s.values[i] = {0.01 * static_cast<double>(i), -1.0 * static_cast<double>(i), 3.0};
    }
    s.imputed_mask[90] = 0b010;
    const std::vector<ParticipantSeries> series{s};
    const std::vector<Episode> eps{
        make_episode("a", 100, EpisodeCategory::kBoth, Magnitude::kD5to9, Magnitude::kD5to9)};
    for (const auto &a : aligned_averages(series, eps)) {
        const auto i = static_cast<std::size_t>(100 + a.offset_day);
        if (i == 90 && a.feature == Feature::kSteps) {
            EXPECT_EQ(a.n, 0U); // imputed cells are excluded
            continue;
        }
        EXPECT_EQ(a.n, 1U);
        EXPECT_EQ(a.mean, s.values[i][static_cast<std::size_t>(a.feature)]);
    }
}

TEST(AlignedAverages, OffsetsOutsideSeriesHaveNoSamples) {
    const std::vector<ParticipantSeries> series{constant_series("a", 90, 20, 1.0)};
    const std::vector<Episode> eps{
        make_episode("a", 100, EpisodeCategory::kBoth, Magnitude::kD5to9, Magnitude::kD5to9)};
    std::size_t with_data = 0;
    for (const auto &a : aligned_averages(series, eps)) {
        with_data += a.n;
    }
    EXPECT_EQ(with_data, 20U * 3U);
}

} // namespace
} // namespace wearad
