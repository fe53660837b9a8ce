#include "wearad/error.hpp"
#include "wearad/labeling.hpp"
#include "wearad/rng.hpp"

#include <gtest/gtest.h>

#include <set>

namespace wearad {
namespace {

const Date kDay0 = Date::parse("2021-01-04");

Date day(int n) { return kDay0 + n; }

std::vector<Assessment> biweekly(std::initializer_list<std::pair<int, int>> scores, int first = 0) {
    std::vector<Assessment> out;
    int d = first;
    for (const auto &[phq, gad] : scores) {
        out.push_back({day(d), phq, gad});
        d += 14;
    }
    return out;
}

NormalPeriod baseline(double phq, double gad) {
    NormalPeriod p;
    p.participant_id = "p";
    p.start_date = day(0);
    p.end_date = day(56);
    p.assessment_count = 5;
    p.mean_phq8 = phq;
    p.mean_gad7 = gad;
    p.sum_phq8 = static_cast<int>(phq * 5);
    p.sum_gad7 = static_cast<int>(gad * 5);
    return p;
}

TEST(CovidExclusions, EmptyInEmptyOut) { EXPECT_TRUE(covid_exclusions({}).empty()); }

TEST(CovidExclusions, SingleEventWindow) {
    const std::vector<CovidEvent> ev{{day(100)}};
    const auto ex = covid_exclusions(ev);
    ASSERT_EQ(ex.size(), 1U);
    EXPECT_EQ(ex[0].start, day(93));
    EXPECT_EQ(ex[0].end, day(121));
}

TEST(CovidExclusions, OverlappingEventsMerge) {
    const std::vector<CovidEvent> ev{{day(110)}, {day(100)}};
    const auto ex = covid_exclusions(ev);
    ASSERT_EQ(ex.size(), 1U);
    EXPECT_EQ(ex[0].start, day(93));
    EXPECT_EQ(ex[0].end, day(131));
}

TEST(CovidExclusions, MatchesIntervalUnionOracle) {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<CovidEvent> ev;
        const int n = rng.integer(0, 6);
        for (int i = 0; i < n; ++i) {
            ev.push_back({day(rng.integer(0, 300))});
        }
        std::set<int> covered;
        for (const auto &e : ev) {
            for (int d = -7; d <= 21; ++d) {
                covered.insert((e.report_date + d) - kDay0);
            }
        }
        const auto ex = covid_exclusions(ev);
        std::set<int> got;
        for (std::size_t i = 0; i < ex.size(); ++i) {
            if (i > 0) {
                EXPECT_GT(ex[i].start - ex[i - 1].end, 1); // maximal: not adjacent
            }
            for (Date d = ex[i].start; d <= ex[i].end; ++d) {
                got.insert(d - kDay0);
            }
        }
        EXPECT_EQ(got, covered);
    }
}

TEST(FindNormalPeriods, FiveLowAssessmentsGiveOnePeriod) {
    const auto a = biweekly({{2, 1}, {2, 1}, {2, 1}, {2, 1}, {2, 1}});
    const auto periods = find_normal_periods("p", a, {});
    ASSERT_EQ(periods.size(), 1U);
    EXPECT_EQ(periods[0].span_days(), 56);
    EXPECT_EQ(periods[0].assessment_count, 5);
    EXPECT_DOUBLE_EQ(periods[0].mean_phq8, 2.0);
    EXPECT_DOUBLE_EQ(periods[0].mean_gad7, 1.0);
}

TEST(FindNormalPeriods, ScoreOfFiveBreaksRun) {
    const auto a = biweekly({{2, 1}, {2, 1}, {2, 5}, {2, 1}, {2, 1}});
    EXPECT_TRUE(find_normal_periods("p", a, {}).empty());
}

TEST(FindNormalPeriods, CovidOverlapExcludes) {
    const auto a = biweekly({{2, 1}, {2, 1}, {2, 1}, {2, 1}, {2, 1}});
    const std::vector<CovidEvent> ev{{day(30)}};
    const auto ex = covid_exclusions(ev);
    EXPECT_TRUE(find_normal_periods("p", a, ex).empty());
}

TEST(FindNormalPeriods, GapOverLimitBreaksContinuity) {
    auto a = biweekly({{1, 1}, {1, 1}, {1, 1}});
    a.push_back({day(28 + 22), 1, 1});
    a.push_back({day(28 + 22 + 14), 1, 1});
    EXPECT_TRUE(find_normal_periods("p", a, {}).empty());
    a[3].date = day(28 + 21);
    a[4].date = day(28 + 21 + 14);
    EXPECT_EQ(find_normal_periods("p", a, {}).size(), 1U);
}

TEST(FindNormalPeriods, FourAssessmentsSpanningFiftySixDays) {
    std::vector<Assessment> a{{day(0), 0, 0}, {day(20), 0, 0}, {day(40), 0, 0}, {day(56), 0, 0}};
    EXPECT_EQ(find_normal_periods("p", a, {}).size(), 1U);
    a[3].date = day(55);
    EXPECT_TRUE(find_normal_periods("p", a, {}).empty());
}

TEST(FindNormalPeriods, ScanOracleProperty) {
    Rng rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Assessment> a;
        int d = 0;
        for (int i = 0; i < 14; ++i) {
            a.push_back({day(d), rng.bernoulli(0.8) ? rng.integer(0, 4) : rng.integer(5, 12),
                         rng.bernoulli(0.9) ? rng.integer(0, 4) : 6});
            d += rng.integer(10, 24);
        }
        for (const auto &p : find_normal_periods("p", a, {})) {
            EXPECT_GE(p.span_days(), 56);
            EXPECT_GE(p.assessment_count, 4);
            int count = 0;
            for (const auto &x : a) {
                if (p.interval().contains(x.date)) {
                    ++count;
                    EXPECT_LT(x.phq8, 5);
                    EXPECT_LT(x.gad7, 5);
                }
            }
            EXPECT_EQ(count, p.assessment_count);
        }
    }
}

TEST(FindEpisodes, PhqOnlySmallDelta) {
    const std::vector<Assessment> a{{day(80), 7, 3}};
    const auto eps = find_episodes(a, baseline(2.0, 1.0));
    ASSERT_EQ(eps.size(), 1U);
    EXPECT_EQ(eps[0].category, EpisodeCategory::kPhqOnly);
    EXPECT_DOUBLE_EQ(eps[0].phq_delta, 5.0);
    EXPECT_EQ(eps[0].magnitude_phq, Magnitude::kD5to9);
    EXPECT_EQ(eps[0].magnitude_gad, Magnitude::kNone);
    EXPECT_EQ(eps[0].period_start, day(59));
    EXPECT_EQ(eps[0].period_end, day(94));
    EXPECT_EQ(eps[0].period().length_days(), 36);
    EXPECT_EQ(eps[0].id(), "p@" + day(80).iso());
}

TEST(FindEpisodes, BothLargeDelta) {
    const std::vector<Assessment> a{{day(80), 12, 11}};
    const auto eps = find_episodes(a, baseline(2.0, 1.0));
    ASSERT_EQ(eps.size(), 1U);
    EXPECT_EQ(eps[0].category, EpisodeCategory::kBoth);
    EXPECT_EQ(eps[0].magnitude_phq, Magnitude::kD10Plus);
    EXPECT_EQ(eps[0].magnitude_gad, Magnitude::kD10Plus);
}

TEST(FindEpisodes, BelowThresholdIsNotAnEpisode) {
    const std::vector<Assessment> a{{day(80), 6, 5}};
    EXPECT_TRUE(find_episodes(a, baseline(2.0, 1.0)).empty());
}

TEST(FindEpisodes, GadOnlyAndFractionalMeans) {
    auto b = baseline(2.2, 1.4);
    b.sum_phq8 = 11;
    b.sum_gad7 = 7;
    const std::vector<Assessment> a{{day(80), 7, 6}, {day(94), 3, 7}};
    const auto eps = find_episodes(a, b);
    ASSERT_EQ(eps.size(), 1U); // 7-2.2 < 5 and 6-1.4 < 5 for the first
    EXPECT_EQ(eps[0].category, EpisodeCategory::kGadOnly);
    EXPECT_EQ(eps[0].assessment_date, day(94));
}

TEST(FindEpisodes, AssessmentsInsideBaselineAreSkipped) {
    const std::vector<Assessment> a{{day(0), 20, 20}, {day(56), 20, 20}, {day(57), 20, 20}};
    const auto eps = find_episodes(a, baseline(2.0, 1.0));
    ASSERT_EQ(eps.size(), 1U);
    EXPECT_EQ(eps[0].assessment_date, day(57));
}

TEST(FindEpisodes, NearestPrecedingPeriodIsBaseline) {
    auto first = baseline(0.0, 0.0);
    auto second = baseline(3.0, 3.0);
    second.start_date = day(200);
    second.end_date = day(256);
    const std::vector<NormalPeriod> periods{first, second};
    const std::vector<Assessment> a{{day(100), 6, 0}, {day(300), 6, 0}, {day(310), 8, 0}};
    const auto eps = find_episodes(a, periods);
    ASSERT_EQ(eps.size(), 2U);
    EXPECT_EQ(eps[0].assessment_date, day(100));
    EXPECT_EQ(eps[1].assessment_date, day(310));
    EXPECT_DOUBLE_EQ(eps[1].phq_delta, 5.0);
}

TEST(FindEpisodes, EarliestPeriodUsedBeforeAnyPeriod) {
    auto p = baseline(1.0, 1.0);
    p.start_date = day(100);
    p.end_date = day(156);
    const std::vector<NormalPeriod> periods{p};
    const std::vector<Assessment> a{{day(20), 6, 1}};
    EXPECT_EQ(find_episodes(a, periods).size(), 1U);
}

TEST(DayLabels, NormalDayWithoutEpisodes) {
    const std::vector<NormalPeriod> periods{baseline(1, 1)};
    const auto labels = day_labels({}, periods, {day(0), day(60)});
    ASSERT_EQ(labels.size(), 61U);
    EXPECT_EQ(labels[10].label, DayLabel::kNormalEligible);
    EXPECT_EQ(labels[57].label, DayLabel::kAmbiguous);
}

TEST(DayLabels, EpisodeWindowIsAnomalous) {
    const std::vector<Assessment> a{{day(200), 12, 0}};
    const auto eps = find_episodes(a, baseline(1, 1));
    const auto labels = day_labels(eps, {}, {day(150), day(250)});
    for (const auto &l : labels) {
        const int n = l.date - kDay0;
        const bool inside = n >= 179 && n <= 214;
        EXPECT_EQ(l.label == DayLabel::kAnomalous, inside) << n;
        EXPECT_EQ(l.episode_ids.size(), inside ? 1U : 0U);
    }
}

TEST(DayLabels, OverlappingEpisodesAttributedToBoth) {
    const std::vector<Assessment> a{{day(200), 12, 0}, {day(210), 12, 0}};
    const auto eps = find_episodes(a, baseline(1, 1));
    ASSERT_EQ(eps.size(), 2U);
    const auto labels = day_labels(eps, {}, {day(150), day(250)});
    int both = 0;
    int anomalous = 0;
    for (const auto &l : labels) {
        anomalous += l.label == DayLabel::kAnomalous;
        both += l.episode_ids.size() == 2;
    }
    EXPECT_EQ(anomalous, 224 - 179 + 1);
    EXPECT_EQ(both, 214 - 189 + 1);
}

TEST(DayLabels, AnomalousOverridesNormal) {
    const std::vector<Assessment> a{{day(70), 12, 0}};
    const std::vector<NormalPeriod> periods{baseline(1, 1)};
    const auto eps = find_episodes(a, periods);
    const auto labels = day_labels(eps, periods, {day(0), day(100)});
    EXPECT_EQ(labels[49].label, DayLabel::kAnomalous);
    EXPECT_EQ(labels[48].label, DayLabel::kNormalEligible);
}

TEST(LabelParticipant, EndToEndCountsByCategory) {
    Participant p;
    p.id = "x";
    p.assessments = biweekly({{1, 1}, {1, 1}, {1, 1}, {1, 1}, {1, 1}, {9, 9}, {9, 1}, {1, 9}});
    const auto labels = label_participant(p);
    ASSERT_EQ(labels.normal_periods.size(), 1U);
    ASSERT_EQ(labels.episodes.size(), 3U);
    EXPECT_EQ(labels.episodes[0].category, EpisodeCategory::kBoth);
    EXPECT_EQ(labels.episodes[1].category, EpisodeCategory::kPhqOnly);
    EXPECT_EQ(labels.episodes[2].category, EpisodeCategory::kGadOnly);
}

TEST(LabelingConfig, RejectsNonsense) {
    LabelingConfig c;
    c.min_normal_assessments = 0;
    EXPECT_THROW(c.validate(), Error);
}

TEST(EnumStrings, RoundTrip) {
    for (auto c : {EpisodeCategory::kBoth, EpisodeCategory::kPhqOnly, EpisodeCategory::kGadOnly}) {
        EXPECT_EQ(episode_category_from_string(to_string(c)), c);
    }
    for (auto m : {Magnitude::kNone, Magnitude::kD5to9, Magnitude::kD10Plus}) {
        EXPECT_EQ(magnitude_from_string(to_string(m)), m);
    }
    for (auto l : {DayLabel::kNormalEligible, DayLabel::kAnomalous, DayLabel::kAmbiguous}) {
        EXPECT_EQ(day_label_from_string(to_string(l)), l);
    }
    EXPECT_EQ(to_string(EpisodeCategory::kPhqOnly), "PHQ_only");
    EXPECT_THROW(magnitude_from_string("huge"), Error);
}

} // namespace
} // namespace wearad
