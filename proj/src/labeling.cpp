#include "wearad/labeling.hpp"

#include "wearad/error.hpp"

#include <algorithm>
#include <map>

#include <fmt/format.h>

namespace wearad {

void LabelingConfig::validate() const {
    if (normal_score_limit < 1 || min_normal_span_days < 0 || min_normal_assessments < 1 ||
        max_assessment_gap_days < 1 || covid_days_before < 0 || covid_days_after < 0 ||
        episode_delta < 1 || large_delta < episode_delta || anomalous_days_before < 0 ||
        anomalous_days_after < 0) {
        throw Error("labeling configuration out of range");
    }
}

std::string_view to_string(EpisodeCategory category) {
    switch (category) {
    case EpisodeCategory::kBoth:
        return "BOTH";
    case EpisodeCategory::kPhqOnly:
        return "PHQ_only";
    case EpisodeCategory::kGadOnly:
        return "GAD_only";
    }
    return "BOTH";
}

std::string_view to_string(Magnitude magnitude) {
    switch (magnitude) {
    case Magnitude::kNone:
        return "none";
    case Magnitude::kD5to9:
        return "d5_9";
    case Magnitude::kD10Plus:
        return "d10_plus";
    }
    return "none";
}

EpisodeCategory episode_category_from_string(std::string_view text) {
    for (auto c : {EpisodeCategory::kBoth, EpisodeCategory::kPhqOnly, EpisodeCategory::kGadOnly}) {
        if (to_string(c) == text) {
            return c;
        }
    }
    throw Error(fmt::format("unknown episode category '{}'", text));
}

Magnitude magnitude_from_string(std::string_view text) {
    for (auto m : {Magnitude::kNone, Magnitude::kD5to9, Magnitude::kD10Plus}) {
        if (to_string(m) == text) {
            return m;
        }
    }
    throw Error(fmt::format("unknown magnitude '{}'", text));
}

std::string_view to_string(DayLabel label) {
    switch (label) {
    case DayLabel::kNormalEligible:
        return "normal_eligible";
    case DayLabel::kAnomalous:
        return "anomalous";
    case DayLabel::kAmbiguous:
        return "ambiguous";
    }
    return "ambiguous";
}

DayLabel day_label_from_string(std::string_view text) {
    for (auto l : {DayLabel::kNormalEligible, DayLabel::kAnomalous, DayLabel::kAmbiguous}) {
        if (to_string(l) == text) {
            return l;
        }
    }
    throw Error(fmt::format("unknown day label '{}'", text));
}

std::string Episode::id() const { return participant_id + "@" + assessment_date.iso(); }

std::vector<CovidExclusion> covid_exclusions(std::span<const CovidEvent> events,
                                             const LabelingConfig &config) {
    std::vector<CovidExclusion> raw;
    raw.reserve(events.size());
    for (const auto &e : events) {
        raw.push_back({e.report_date - config.covid_days_before,
                       e.report_date + config.covid_days_after});
    }
    std::sort(raw.begin(), raw.end(),
              [](const auto &a, const auto &b) { return a.start < b.start; });
    std::vector<CovidExclusion> merged;
    for (const auto &iv : raw) {
        if (!merged.empty() && iv.start <= merged.back().end + 1) {
            merged.back().end = std::max(merged.back().end, iv.end);
        } else {
            merged.push_back(iv);
        }
    }
    return merged;
}

std::vector<NormalPeriod> find_normal_periods(std::string_view participant_id,
                                              std::span<const Assessment> assessments,
                                              std::span<const CovidExclusion> exclusions,
                                              const LabelingConfig &config) {
    std::vector<NormalPeriod> periods;
    auto is_low = [&](const Assessment &a) {
        return a.phq8 < config.normal_score_limit && a.gad7 < config.normal_score_limit;
    };
    auto close_run = [&](std::size_t first, std::size_t last) {
        const auto count = static_cast<int>(last - first + 1);
        const Date start = assessments[first].date;
        const Date end = assessments[last].date;
        if (count < config.min_normal_assessments || end - start < config.min_normal_span_days) {
            return;
        }
        const DateInterval span{start, end};
        for (const auto &ex : exclusions) {
            if (ex.intersects(span)) {
                return;
            }
        }
        NormalPeriod p;
        p.participant_id = std::string(participant_id);
        p.start_date = start;
        p.end_date = end;
        p.assessment_count = count;
        for (std::size_t i = first; i <= last; ++i) {
            p.sum_phq8 += assessments[i].phq8;
            p.sum_gad7 += assessments[i].gad7;
        }
        p.mean_phq8 = static_cast<double>(p.sum_phq8) / count;
        p.mean_gad7 = static_cast<double>(p.sum_gad7) / count;
        periods.push_back(std::move(p));
    };

    std::size_t i = 0;
    while (i < assessments.size()) {
        if (!is_low(assessments[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < assessments.size() && is_low(assessments[j + 1]) &&
               assessments[j + 1].date - assessments[j].date <= config.max_assessment_gap_days) {
            ++j;
        }
        close_run(i, j);
        i = j + 1;
    }
    return periods;
}

namespace {

Magnitude bucket(long long scaled_delta, int count, const LabelingConfig &config) {
    // scaled_delta = score * count - sum, i.e. delta * count, kept integral so
    // the >= thresholds are exact.
    if (scaled_delta >= static_cast<long long>(config.large_delta) * count) {
        return Magnitude::kD10Plus;
    }
    if (scaled_delta >= static_cast<long long>(config.episode_delta) * count) {
        return Magnitude::kD5to9;
    }
    return Magnitude::kNone;
}

std::optional<Episode> classify(std::string_view participant_id, const Assessment &a,
                                const NormalPeriod &baseline, const LabelingConfig &config) {
    const int n = baseline.assessment_count;
    const long long phq_scaled = static_cast<long long>(a.phq8) * n - baseline.sum_phq8;
    const long long gad_scaled = static_cast<long long>(a.gad7) * n - baseline.sum_gad7;
    const auto mp = bucket(phq_scaled, n, config);
    const auto mg = bucket(gad_scaled, n, config);
    if (mp == Magnitude::kNone && mg == Magnitude::kNone) {
        return std::nullopt;
    }
    Episode e;
    e.participant_id = std::string(participant_id);
    e.assessment_date = a.date;
    e.category = (mp != Magnitude::kNone && mg != Magnitude::kNone) ? EpisodeCategory::kBoth
                 : mp != Magnitude::kNone                           ? EpisodeCategory::kPhqOnly
                                                                    : EpisodeCategory::kGadOnly;
    e.phq_delta = a.phq8 - baseline.mean_phq8;
    e.gad_delta = a.gad7 - baseline.mean_gad7;
    e.magnitude_phq = mp;
    e.magnitude_gad = mg;
    e.period_start = a.date - config.anomalous_days_before;
    e.period_end = a.date + config.anomalous_days_after;
    return e;
}

} // namespace

std::vector<Episode> find_episodes(std::span<const Assessment> assessments,
                                   const NormalPeriod &baseline, const LabelingConfig &config) {
    return find_episodes(assessments, std::span<const NormalPeriod>(&baseline, 1), config);
}

std::vector<Episode> find_episodes(std::span<const Assessment> assessments,
                                   std::span<const NormalPeriod> periods,
                                   const LabelingConfig &config) {
    std::vector<Episode> episodes;
    if (periods.empty()) {
        return episodes;
    }
    for (const auto &a : assessments) {
        const NormalPeriod *baseline = nullptr;
        bool inside = false;
        for (const auto &p : periods) {
            if (p.interval().contains(a.date)) {
                inside = true;
                break;
            }
            if (p.end_date < a.date && (baseline == nullptr || p.end_date > baseline->end_date)) {
                baseline = &p;
            }
        }
        if (inside) {
            continue;
        }
        if (baseline == nullptr) {
            baseline = &*std::min_element(periods.begin(), periods.end(),
                                          [](const auto &x, const auto &y) {
                                              return x.start_date < y.start_date;
                                          });
        }
        if (auto e = classify(baseline->participant_id, a, *baseline, config)) {
            episodes.push_back(std::move(*e));
        }
    }
    return episodes;
}

std::vector<LabeledDay> day_labels(std::span<const Episode> episodes,
                                   std::span<const NormalPeriod> periods, DateInterval calendar) {
    std::vector<LabeledDay> days;
    if (calendar.end < calendar.start) {
        return days;
    }
    days.reserve(static_cast<std::size_t>(calendar.length_days()));
    for (Date d = calendar.start; d <= calendar.end; ++d) {
        days.push_back(LabeledDay{d, DayLabel::kAmbiguous, {}});
    }
    for (const auto &p : periods) {
        for (Date d = std::max(p.start_date, calendar.start); d <= std::min(p.end_date, calendar.end);
             ++d) {
            days[static_cast<std::size_t>(d - calendar.start)].label = DayLabel::kNormalEligible;
        }
    }
    for (const auto &e : episodes) {
        const auto id = e.id();
        for (Date d = std::max(e.period_start, calendar.start);
             d <= std::min(e.period_end, calendar.end); ++d) {
            auto &day = days[static_cast<std::size_t>(d - calendar.start)];
            day.label = DayLabel::kAnomalous;
            day.episode_ids.push_back(id);
        }
    }
    return days;
}

ParticipantLabels label_participant(const Participant &participant, const LabelingConfig &config) {
    ParticipantLabels out;
    out.exclusions = covid_exclusions(participant.covid_events, config);
    out.normal_periods =
        find_normal_periods(participant.id, participant.assessments, out.exclusions, config);
    out.episodes = find_episodes(participant.assessments, out.normal_periods, config);
    return out;
}

} // namespace wearad
