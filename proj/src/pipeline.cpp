#include "wearad/pipeline.hpp"

#include "wearad/error.hpp"
#include "wearad/rng.hpp"
#include "wearad/serialization.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

namespace wearad {

namespace {

nlohmann::json prf_json(const AdjustedPRF &prf) {
    return {{"precision", prf.precision}, {"recall", prf.recall}, {"f_score", prf.f_score},
            {"tp", prf.tp},               {"fp", prf.fp},         {"fn", prf.fn}};
}

std::string window_key(std::string_view participant_id, Date end_date) {
    return fmt::format("{}@{}", participant_id, end_date.iso());
}

} // namespace

void ExplainConfig::validate() const {
    if (background_size < 1 || permutations < 1 || max_windows_per_episode < 0 ||
        max_false_alarm_windows < 0) {
        throw Error("explain configuration out of range");
    }
}

void PipelineConfig::validate() const {
    scenario.validate();
    labeling.validate();
    features.validate();
    train.validate();
    explain.validate();
    if (!(percentile >= 0.0 && percentile <= 100.0)) {
        throw Error(fmt::format("percentile {} outside [0, 100]", percentile));
    }
    for (double p : sweep_percentiles) {
        if (!(p >= 0.0 && p <= 100.0)) {
            throw Error(fmt::format("sweep percentile {} outside [0, 100]", p));
        }
    }
}

void PipelineConfig::apply_seed() {
    scenario.seed = seed;
    train.seed = seed;
}

void to_json(nlohmann::json &j, const ExplainConfig &c) {
    j = nlohmann::json{{"background_size", c.background_size},
                       {"permutations", c.permutations},
                       {"max_windows_per_episode", c.max_windows_per_episode},
                       {"max_false_alarm_windows", c.max_false_alarm_windows}};
}

void from_json(const nlohmann::json &j, ExplainConfig &c) {
    reject_unknown_keys(j,
                        {"background_size", "permutations", "max_windows_per_episode",
                         "max_false_alarm_windows"},
                        "explain");
    c.background_size = j.value("background_size", c.background_size);
    c.permutations = j.value("permutations", c.permutations);
    c.max_windows_per_episode = j.value("max_windows_per_episode", c.max_windows_per_episode);
    c.max_false_alarm_windows = j.value("max_false_alarm_windows", c.max_false_alarm_windows);
}

void to_json(nlohmann::json &j, const PipelineConfig &c) {
    j = nlohmann::json{{"cohort", c.cohort},
                       {"scenario", c.scenario},
                       {"labeling", c.labeling},
                       {"features", c.features},
                       {"train", c.train},
                       {"percentile", c.percentile},
                       {"sweep_percentiles", c.sweep_percentiles},
                       {"explain", c.explain},
                       {"seed", c.seed},
                       {"strict", c.strict}};
}

void from_json(const nlohmann::json &j, PipelineConfig &c) {
    reject_unknown_keys(j,
                        {"cohort", "scenario", "labeling", "features", "train", "percentile",
                         "sweep_percentiles", "explain", "seed", "strict"},
                        "pipeline");
    try {
        c.cohort = j.value("cohort", c.cohort);
        c.seed = j.value("seed", c.seed);
        c.percentile = j.value("percentile", c.percentile);
        c.sweep_percentiles = j.value("sweep_percentiles", c.sweep_percentiles);
        c.strict = j.value("strict", c.strict);
    } catch (const nlohmann::json::exception &e) {
        throw Error(fmt::format("pipeline config: {}", e.what()));
    }
    const auto nested_seed = [&](const char *section) {
        if (j.contains(section) && j.at(section).contains("seed") &&
            j.at(section).at("seed") != nlohmann::json(c.seed)) {
            throw Error(fmt::format("'{}.seed' differs from the global 'seed'; set only the global seed",
                                    section));
        }
    };
    nested_seed("scenario");
    nested_seed("train");
    if (j.contains("scenario")) {
        c.scenario = j.at("scenario").get<ScenarioConfig>();
    }
    if (j.contains("labeling")) {
        c.labeling = j.at("labeling").get<LabelingConfig>();
    }
    if (j.contains("features")) {
        c.features = j.at("features").get<FeatureConfig>();
    }
    if (j.contains("train")) {
        c.train = j.at("train").get<TrainConfig>();
    }
    if (j.contains("explain")) {
        c.explain = j.at("explain").get<ExplainConfig>();
    }
    c.apply_seed();
}

std::string config_hash(const PipelineConfig &config) {
    auto resolved = config;
    resolved.apply_seed();
    nlohmann::json j = resolved;
    j.erase("cohort");
    return fmt::format("{:016x}", fnv1a(j.dump()));
}

Provenance provenance(const PipelineConfig &config) { return {config_hash(config), config.seed}; }

nlohmann::json provenance_json(const Provenance &provenance) {
    return {{"config_hash", provenance.config_hash}, {"seed", provenance.seed}};
}

LabeledParticipant label_participant_days(const Participant &participant,
                                          const LabelingConfig &config) {
    LabeledParticipant out;
    out.participant_id = participant.id;
    out.labels = label_participant(participant, config);
    out.calendar = minute_calendar(participant.minutes);
    if (out.calendar) {
        out.days = day_labels(out.labels.episodes, out.labels.normal_periods, *out.calendar);
    }
    return out;
}

void add_participant(FeatureSet &set, std::string_view participant_id,
                     std::span<const DailyFeatures> daily, std::span<const LabeledDay> days) {
    auto series = prepare_series(participant_id, daily);
    if (!series) {
        return;
    }
    auto windows = make_windows(*series, days);
    set.windows.insert(set.windows.end(), std::make_move_iterator(windows.begin()),
                       std::make_move_iterator(windows.end()));
    set.series.push_back(std::move(*series));
}

TrainingSet training_set(std::span<const Window> windows, const FeatureConfig &config) {
    TrainingSet set;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (is_training_window(windows[i], config)) {
            set.values.push_back(windows[i].values);
            set.window_index.push_back(i);
        }
    }
    return set;
}

TrainResult train_model(std::span<const Window> windows, std::span<const ParticipantSeries> series,
                        const PipelineConfig &config) {
    const auto set = training_set(windows, config.features);
    if (set.values.size() < 10) {
        throw Error(fmt::format("only {} normal training windows; training needs at least 10",
                                set.values.size()));
    }
    auto train_config = config.train;
    train_config.seed = config.seed;
    auto [model, report] = train(set.values, train_config);
    for (const auto &s : series) {
        model.normalization[s.participant_id] = s.constants;
    }
    model.threshold = select_threshold(report.validation_errors, config.percentile);
    model.threshold_percentile = config.percentile;
    return {std::move(model), std::move(report)};
}

Evaluation evaluate_detections(std::span<const Detection> detections,
                               std::span<const Episode> episodes,
                               std::span<const double> validation_errors,
                               std::span<const ParticipantSeries> series,
                               const PipelineConfig &config) {
    Evaluation ev;
    ev.percentile = config.percentile;
    ev.threshold = select_threshold(validation_errors, config.percentile);
    std::vector<Detection> flagged(detections.begin(), detections.end());
    for (auto &d : flagged) {
        d.threshold = ev.threshold;
        d.flagged = is_flagged(d.error, ev.threshold);
    }
    ev.windows = flagged.size();
    ev.flagged = static_cast<std::size_t>(
        std::count_if(flagged.begin(), flagged.end(), [](const Detection &d) { return d.flagged; }));
    ev.overall = adjusted_prf(flagged);
    ev.breakdown = breakdown(flagged, episodes);
    ev.outcomes = episode_outcomes(flagged, episodes);
    ev.aligned = aligned_averages(series, episodes);

    auto sweep = flagged;
    for (double p : config.sweep_percentiles) {
        SweepPoint point;
        point.percentile = p;
        point.threshold = select_threshold(validation_errors, p);
        for (auto &d : sweep) {
            d.threshold = point.threshold;
            d.flagged = is_flagged(d.error, point.threshold);
            point.flagged += d.flagged ? 1 : 0;
        }
        point.prf = adjusted_prf(sweep);
        ev.sweep.push_back(point);
    }
    return ev;
}

nlohmann::json metrics_json(const Evaluation &ev, const Provenance &provenance) {
    nlohmann::json per_category = nlohmann::json::object();
    for (const auto &[name, prf] : ev.breakdown.per_category) {
        per_category[name] = prf_json(prf);
    }
    nlohmann::json per_magnitude = nlohmann::json::object();
    for (const auto &[name, prf] : ev.breakdown.per_magnitude) {
        per_magnitude[name] = prf_json(prf);
    }
    nlohmann::json sweep = nlohmann::json::array();
    for (const auto &p : ev.sweep) {
        sweep.push_back({{"percentile", p.percentile},
                         {"threshold", p.threshold},
                         {"flagged", p.flagged},
                         {"P", p.prf.precision},
                         {"R", p.prf.recall},
                         {"F", p.prf.f_score}});
    }
    std::size_t detected = 0;
    for (const auto &o : ev.outcomes.outcomes) {
        detected += o.detected ? 1 : 0;
    }
    return {{"provenance", provenance_json(provenance)},
            {"percentile", ev.percentile},
            {"threshold", ev.threshold},
            {"windows", ev.windows},
            {"flagged", ev.flagged},
            {"overall", prf_json(ev.overall)},
            {"per_category", std::move(per_category)},
            {"per_magnitude", std::move(per_magnitude)},
            {"episode_counts", ev.breakdown.episode_counts},
            {"detection_rate", ev.outcomes.detection_rate ? nlohmann::json(*ev.outcomes.detection_rate)
                                                          : nlohmann::json("not_applicable")},
            {"episodes", {{"scored", ev.outcomes.outcomes.size()}, {"detected", detected}}},
            {"threshold_sweep", std::move(sweep)}};
}

RankTest rank_test(const RankTable &table, int rank) {
    constexpr std::array<EpisodeCategory, 3> kRows{EpisodeCategory::kBoth, EpisodeCategory::kPhqOnly,
                                                   EpisodeCategory::kGadOnly};
    const auto slice = table.rank_slice(rank);
    std::vector<std::size_t> rows;
    std::vector<std::size_t> cols;
    for (std::size_t r = 0; r < slice.size(); ++r) {
        if (std::accumulate(slice[r].begin(), slice[r].end(), 0.0) > 0.0) {
            rows.push_back(r);
        }
    }
    for (std::size_t c = 0; c < kFeatureCount; ++c) {
        double total = 0.0;
        for (const auto &row : slice) {
            total += row[c];
        }
        if (total > 0.0) {
            cols.push_back(c);
        }
    }
    RankTest test;
    test.rank = rank;
    for (auto r : rows) {
        test.categories.emplace_back(to_string(kRows[r]));
    }
    for (auto c : cols) {
        test.features.emplace_back(to_string(kAllFeatures[c]));
    }
    if (rows.size() < 2 || cols.size() < 2) {
        test.error = fmt::format("rank {} has {} non-empty categories and {} non-empty features; "
                                 "a test needs at least two of each",
                                 rank, rows.size(), cols.size());
        return test;
    }
    std::vector<std::vector<double>> reduced;
    for (auto r : rows) {
        std::vector<double> row;
        for (auto c : cols) {
            row.push_back(slice[r][c]);
        }
        reduced.push_back(std::move(row));
    }
    try {
        test.result = rank_distribution_test(reduced);
    } catch (const Error &e) {
        test.error = e.what();
    }
    return test;
}

Explanation explain_detections(const LstmAutoencoder &model, std::span<const Window> windows,
                               std::span<const Detection> detections,
                               std::span<const Episode> episodes,
                               std::span<const WindowValues> background_pool,
                               const PipelineConfig &config) {
    if (background_pool.empty()) {
        throw Error("explain needs at least one validation window as background");
    }
    std::unordered_map<std::string, std::size_t> window_of;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        window_of.emplace(window_key(windows[i].participant_id, windows[i].end_date), i);
    }

    // Highest error first; end date breaks ties so the order is total.
    const auto by_error = [&](std::size_t a, std::size_t b) {
        if (detections[a].error != detections[b].error) {
            return detections[a].error > detections[b].error;
        }
        return detections[a].end_date < detections[b].end_date;
    };
    const auto cap = [](std::vector<std::size_t> &v, int limit) {
        if (limit > 0 && v.size() > static_cast<std::size_t>(limit)) {
            v.resize(static_cast<std::size_t>(limit));
        }
    };

    std::unordered_map<std::string, std::vector<std::size_t>> by_episode;
    std::vector<std::size_t> false_alarms;
    for (std::size_t i = 0; i < detections.size(); ++i) {
        for (const auto &id : detections[i].episode_ids) {
            by_episode[id].push_back(i);
        }
        if (detections[i].flagged && detections[i].label == DayLabel::kNormalEligible) {
            false_alarms.push_back(i);
        }
    }

    // Unique detections to attribute, in first-selection order.
    std::vector<std::size_t> selected;
    std::unordered_map<std::size_t, std::size_t> slot_of;
    std::vector<std::string> reasons;
    const auto select = [&](std::size_t det, const std::string &reason) {
        if (slot_of.emplace(det, selected.size()).second) {
            selected.push_back(det);
            reasons.push_back(reason);
        }
        return slot_of.at(det);
    };
    std::vector<std::vector<std::size_t>> episode_slots(episodes.size());
    for (std::size_t e = 0; e < episodes.size(); ++e) {
        const auto id = episodes[e].id();
        auto it = by_episode.find(id);
        if (it == by_episode.end()) {
            continue;
        }
        auto picks = it->second;
        std::sort(picks.begin(), picks.end(), by_error);
        cap(picks, config.explain.max_windows_per_episode);
        for (auto det : picks) {
            episode_slots[e].push_back(select(det, id));
        }
    }
    std::sort(false_alarms.begin(), false_alarms.end(), by_error);
    if (config.explain.max_false_alarm_windows == 0) {
        false_alarms.clear();
    }
    cap(false_alarms, config.explain.max_false_alarm_windows);
    for (auto det : false_alarms) {
        select(det, "false_alarm");
    }

    std::vector<WindowValues> background(background_pool.begin(), background_pool.end());
    Rng rng(derive_seed(config.seed, fnv1a("explain-background")));
    rng.shuffle(std::span<WindowValues>(background));
    background.resize(std::min(background.size(),
                               static_cast<std::size_t>(config.explain.background_size)));

    Explanation out;
    out.windows.resize(selected.size());
    const auto scorer = model_scorer(model);
    std::vector<std::string> failures(selected.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t k = 0; k < selected.size(); ++k) {
        try {
            const auto &d = detections[selected[k]];
            const auto wit = window_of.find(window_key(d.participant_id, d.end_date));
            if (wit == window_of.end()) {
                throw Error(fmt::format("no window values for {} ending {}", d.participant_id,
                                        d.end_date.iso()));
            }
            const auto &values = windows[wit->second].values;
            ShapleyOptions options;
            options.mode = ShapleyMode::kSampled;
            options.permutations = config.explain.permutations;
            options.seed = window_seed(config.seed, d.participant_id, d.end_date);
            auto &w = out.windows[k];
            w.attribution = shapley_attributions(scorer, values, background, options);
            w.attribution.participant_id = d.participant_id;
            w.attribution.end_date = d.end_date;
            w.values = values;
            w.reason = reasons[k];
            w.threshold = d.threshold;
        } catch (const std::exception &e) {
            failures[k] = e.what();
        }
    }
    for (const auto &f : failures) {
        if (!f.empty()) {
            throw Error(f);
        }
    }

    for (std::size_t e = 0; e < episodes.size(); ++e) {
        if (episode_slots[e].empty()) {
            continue;
        }
        std::vector<AttributionMatrix> attributions;
        for (auto slot : episode_slots[e]) {
            attributions.push_back(out.windows[slot].attribution);
        }
        EpisodeRanking r{episodes[e].id(), episodes[e].category, episode_feature_ranks(attributions),
                         attributions.size()};
        out.table.add(r.category, r.ranking);
        out.rankings.push_back(std::move(r));
    }
    for (int rank = 1; rank <= kFeatureCount; ++rank) {
        out.tests.push_back(rank_test(out.table, rank));
    }
    std::vector<AttributionMatrix> all;
    for (const auto &w : out.windows) {
        all.push_back(w.attribution);
    }
    out.dynamics = time_dynamic_export(all);
    return out;
}

nlohmann::json rank_tests_json(const Explanation &explanation, const Provenance &provenance) {
    nlohmann::json tests = nlohmann::json::array();
    for (const auto &t : explanation.tests) {
        nlohmann::json jt{{"rank", t.rank}, {"categories", t.categories}, {"features", t.features}};
        if (t.result) {
            jt["chi2"] = t.result->chi2;
            jt["df"] = t.result->df;
            jt["p"] = t.result->p;
        } else {
            jt["error"] = t.error;
        }
        tests.push_back(std::move(jt));
    }
    nlohmann::json episodes = nlohmann::json::object();
    for (auto c : {EpisodeCategory::kBoth, EpisodeCategory::kPhqOnly, EpisodeCategory::kGadOnly}) {
        episodes[std::string(to_string(c))] = explanation.table.episodes(c);
    }
    return {{"provenance", provenance_json(provenance)},
            {"categories", episodes},
            {"tests", std::move(tests)}};
}

} // namespace wearad
