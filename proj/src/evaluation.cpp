#include "wearad/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace wearad {

namespace {

using IdSet = std::unordered_set<std::string>;

IdSet detected_set(std::span<const Detection> detections) {
    IdSet out;
    for (const auto &d : detections) {
        if (d.flagged) {
            out.insert(d.episode_ids.begin(), d.episode_ids.end());
        }
    }
    return out;
}

bool any_in(const std::vector<std::string> &ids, const IdSet &set) {
    return std::any_of(ids.begin(), ids.end(), [&](const auto &id) { return set.contains(id); });
}

} // namespace

AdjustedPRF prf_from_counts(std::size_t tp, double fp, std::size_t fn) {
    AdjustedPRF r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    const double t = static_cast<double>(tp);
    if (t + fp > 0.0) {
        r.precision = t / (t + fp);
    }
    if (tp + fn > 0) {
        r.recall = t / static_cast<double>(tp + fn);
    }
    if (r.precision + r.recall > 0.0) {
        r.f_score = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    }
    return r;
}

std::vector<std::string> detected_episodes(std::span<const Detection> detections) {
    const auto set = detected_set(detections);
    std::vector<std::string> out(set.begin(), set.end());
    std::sort(out.begin(), out.end());
    return out;
}

AdjustedPRF adjusted_prf(std::span<const Detection> detections) {
    const auto detected = detected_set(detections);
    std::size_t tp = 0;
    std::size_t fn = 0;
    std::size_t fp = 0;
    for (const auto &d : detections) {
        switch (d.label) {
        case DayLabel::kAnomalous:
            if (any_in(d.episode_ids, detected)) {
                ++tp;
            } else {
                ++fn;
            }
            break;
        case DayLabel::kNormalEligible:
            fp += d.flagged ? 1 : 0;
            break;
        case DayLabel::kAmbiguous:
            break;
        }
    }
    return prf_from_counts(tp, static_cast<double>(fp), fn);
}

AdjustedPRF stratum_prf(std::span<const Detection> detections,
                        const std::vector<std::string> &episode_ids, double false_positives) {
    const IdSet stratum(episode_ids.begin(), episode_ids.end());
    IdSet detected;
    for (const auto &d : detections) {
        if (d.flagged) {
            for (const auto &id : d.episode_ids) {
                if (stratum.contains(id)) {
                    detected.insert(id);
                }
            }
        }
    }
    std::size_t tp = 0;
    std::size_t fn = 0;
    for (const auto &d : detections) {
        if (d.label != DayLabel::kAnomalous || !any_in(d.episode_ids, stratum)) {
            continue;
        }
        if (any_in(d.episode_ids, detected)) {
            ++tp;
        } else {
            ++fn;
        }
    }
    return prf_from_counts(tp, false_positives, fn);
}

Magnitude episode_magnitude(const Episode &episode) {
    return std::max(episode.magnitude_phq, episode.magnitude_gad);
}

Breakdown breakdown(std::span<const Detection> detections, std::span<const Episode> episodes) {
    const auto overall = adjusted_prf(detections);
    const std::size_t total_anomalous = overall.tp + overall.fn;

    std::map<std::string, std::vector<std::string>> strata;
    for (auto c : {EpisodeCategory::kBoth, EpisodeCategory::kPhqOnly, EpisodeCategory::kGadOnly}) {
        strata[std::string(to_string(c))];
    }
    std::map<std::string, std::vector<std::string>> magnitudes;
    for (auto m : {Magnitude::kD5to9, Magnitude::kD10Plus}) {
        const std::string name(to_string(m));
        magnitudes[name];
        magnitudes["PHQ/" + name];
        magnitudes["GAD/" + name];
    }
    for (const auto &e : episodes) {
        const auto id = e.id();
        strata[std::string(to_string(e.category))].push_back(id);
        magnitudes[std::string(to_string(episode_magnitude(e)))].push_back(id);
        if (e.magnitude_phq != Magnitude::kNone) {
            magnitudes["PHQ/" + std::string(to_string(e.magnitude_phq))].push_back(id);
        }
        if (e.magnitude_gad != Magnitude::kNone) {
            magnitudes["GAD/" + std::string(to_string(e.magnitude_gad))].push_back(id);
        }
    }

    auto evaluate = [&](const std::vector<std::string> &ids) {
        const auto unshared = stratum_prf(detections, ids, 0.0);
        const std::size_t n = unshared.tp + unshared.fn;
        const double share = total_anomalous == 0
                                 ? overall.fp
                                 : overall.fp * static_cast<double>(n) /
                                       static_cast<double>(total_anomalous);
        return prf_from_counts(unshared.tp, share, unshared.fn);
    };

    Breakdown out;
    for (const auto &[name, ids] : strata) {
        out.per_category[name] = evaluate(ids);
        out.episode_counts[name] = ids.size();
    }
    for (const auto &[name, ids] : magnitudes) {
        out.per_magnitude[name] = evaluate(ids);
        out.episode_counts[name] = ids.size();
    }
    return out;
}

OutcomeSummary episode_outcomes(std::span<const Detection> detections,
                                std::span<const Episode> episodes) {
    struct Tally {
        std::size_t windows = 0;
        std::size_t flagged = 0;
    };
    std::unordered_map<std::string, Tally> tallies;
    std::unordered_map<std::string, std::vector<Date>> false_alarms;
    for (const auto &d : detections) {
        for (const auto &id : d.episode_ids) {
            auto &t = tallies[id];
            ++t.windows;
            t.flagged += d.flagged ? 1 : 0;
        }
        if (d.flagged && d.label == DayLabel::kNormalEligible) {
            false_alarms[d.participant_id].push_back(d.end_date);
        }
    }

    OutcomeSummary summary;
    std::size_t detected = 0;
    for (const auto &e : episodes) {
        const auto id = e.id();
        const auto it = tallies.find(id);
        if (it == tallies.end()) {
            continue;
        }
        EpisodeOutcome o;
        o.episode_id = id;
        o.participant_id = e.participant_id;
        o.assessment_date = e.assessment_date;
        o.category = e.category;
        o.magnitude_phq = e.magnitude_phq;
        o.magnitude_gad = e.magnitude_gad;
        o.windows = it->second.windows;
        o.flagged_windows = it->second.flagged;
        o.detected = o.flagged_windows > 0;
        if (const auto fa = false_alarms.find(e.participant_id); fa != false_alarms.end()) {
            for (Date d : fa->second) {
                o.local_false_positives +=
                    std::abs(d - e.assessment_date) <= kLocalFalsePositiveDays ? 1 : 0;
            }
        }
        if (o.detected) {
            o.f_score = prf_from_counts(o.windows, static_cast<double>(o.local_false_positives), 0)
                            .f_score;
            ++detected;
        }
        summary.outcomes.push_back(std::move(o));
    }
    if (!summary.outcomes.empty()) {
        summary.detection_rate =
            static_cast<double>(detected) / static_cast<double>(summary.outcomes.size());
    }
    return summary;
}

double AlignedAverage::ci95_half_width() const {
    return n > 1 ? 1.96 * sd / std::sqrt(static_cast<double>(n)) : 0.0;
}

std::vector<AlignedAverage> aligned_averages(std::span<const ParticipantSeries> series,
                                             std::span<const Episode> episodes, int first_offset,
                                             int last_offset) {
    std::unordered_map<std::string, const ParticipantSeries *> by_id;
    for (const auto &s : series) {
        by_id.emplace(s.participant_id, &s);
    }
    const int span = std::max(0, last_offset - first_offset + 1);
    std::vector<std::vector<double>> samples(static_cast<std::size_t>(span * kFeatureCount));
    for (const auto &e : episodes) {
        const auto it = by_id.find(e.participant_id);
        if (it == by_id.end()) {
            continue;
        }
        const auto &s = *it->second;
        for (int k = 0; k < span; ++k) {
            const int idx = (e.assessment_date + first_offset + k) - s.first_date;
            if (idx < 0 || idx >= static_cast<int>(s.days())) {
                continue;
            }
            const auto i = static_cast<std::size_t>(idx);
            for (int f = 0; f < kFeatureCount; ++f) {
                if ((s.imputed_mask[i] & (1U << f)) == 0) {
                    samples[static_cast<std::size_t>(k * kFeatureCount + f)].push_back(
                        s.values[i][static_cast<std::size_t>(f)]);
                }
            }
        }
    }

    std::vector<AlignedAverage> out;
    out.reserve(samples.size());
    for (int k = 0; k < span; ++k) {
        for (int f = 0; f < kFeatureCount; ++f) {
            const auto &xs = samples[static_cast<std::size_t>(k * kFeatureCount + f)];
            AlignedAverage a;
            a.offset_day = first_offset + k;
            a.feature = static_cast<Feature>(f);
            a.n = xs.size();
            if (!xs.empty()) {
                double sum = 0.0;
                for (double x : xs) {
                    sum += x;
                }
                a.mean = sum / static_cast<double>(xs.size());
                if (xs.size() > 1) {
                    double sq = 0.0;
                    for (double x : xs) {
                        sq += (x - a.mean) * (x - a.mean);
                    }
                    a.sd = std::sqrt(sq / static_cast<double>(xs.size() - 1));
                }
            }
            out.push_back(a);
        }
    }
    return out;
}

} // namespace wearad
