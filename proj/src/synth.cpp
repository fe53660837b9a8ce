#include "wearad/synth.hpp"

#include "wearad/error.hpp"
#include "wearad/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/format.h>

namespace wearad {

namespace {

constexpr std::array<EpisodeCategory, 3> kCategories{
    EpisodeCategory::kBoth, EpisodeCategory::kPhqOnly, EpisodeCategory::kGadOnly};

// Days between the end of the baseline and the earliest episode assessment,
// and the minimum spacing of episodes within one participant.
constexpr int kEpisodeLeadDays = 28;
constexpr int kEpisodeSpacingDays = 42;
// Consecutive low-score assessments allowed after the baseline, kept short
// so no second normal period can form.
constexpr int kMaxLowRun = 3;
constexpr double kMildProbability = 0.3;

bool in_unit(double x) { return x >= 0.0 && x <= 1.0; }

double sample_clamped(Rng &rng, double mean, double sd, double lo, double hi) {
    return std::clamp(rng.normal(mean, sd), lo, hi);
}

EpisodeCategory draw_category(Rng &rng, const std::map<std::string, double> &mix) {
    double total = 0.0;
    for (auto c : kCategories) {
        total += mix.at(std::string(to_string(c)));
    }
    double u = rng.uniform() * total;
    for (auto c : kCategories) {
        u -= mix.at(std::string(to_string(c)));
        if (u < 0.0) {
            return c;
        }
    }
    return kCategories.back();
}

// Smallest integer score whose delta over the baseline mean (sum / n) is at
// least `target`, computed exactly in integers.
int raised_score(int sum, int n, int target) {
    const int need = sum + target * n;
    return (need + n - 1) / n;
}

struct BaselineSums {
    int phq = 0;
    int gad = 0;
    int n = 0;
};

} // namespace

void ScenarioConfig::validate() const {
    const bool ok =
        participants >= 1 && days >= 1 && cadence_days >= 1 && cadence_jitter_days >= 0 &&
        baseline_assessments >= 1 && resting_hr_sd >= 0 && steps_sd >= 0 && sleep_sd >= 0 &&
        resting_hr_noise_sd >= 0 && steps_log_sd >= 0 && sleep_noise_sd >= 0 &&
        weekly_amplitude >= 0 && in_unit(episode_rate) && episodes_per_participant >= 1 &&
        in_unit(large_delta_probability) && ramp_days >= 1 && in_unit(missing_day_rate) &&
        in_unit(minute_dropout_rate) && in_unit(covid_rate) && in_unit(covid_baseline_rate) &&
        large_effect_scale >= 0;
    if (!ok) {
        throw Error("scenario configuration out of range");
    }
    Date::parse(start_date);
    double mix_total = 0.0;
    for (auto c : kCategories) {
        const auto name = std::string(to_string(c));
        const auto it = category_mix.find(name);
        if (it == category_mix.end() || !(it->second >= 0.0)) {
            throw Error(fmt::format("category_mix needs a non-negative weight for '{}'", name));
        }
        mix_total += it->second;
        if (!category_effect_scale.contains(name)) {
            throw Error(fmt::format("category_effect_scale has no entry for '{}'", name));
        }
    }
    if (!(mix_total > 0.0)) {
        throw Error("category_mix weights sum to zero");
    }
    for (const auto &[name, profile] : category_effect) {
        episode_category_from_string(name);
        (void)profile;
    }
}

EffectProfile ScenarioConfig::effect_for(EpisodeCategory category, bool large) const {
    const auto name = std::string(to_string(category));
    EffectProfile p;
    if (const auto it = category_effect.find(name); it != category_effect.end()) {
        p = it->second;
    } else {
        const double s = category_effect_scale.at(name);
        p = {effect.resting_hr_bpm * s, effect.steps_fraction * s, effect.sleep_minutes * s};
    }
    if (large) {
        p.resting_hr_bpm *= large_effect_scale;
        p.steps_fraction *= large_effect_scale;
        p.sleep_minutes *= large_effect_scale;
    }
    p.steps_fraction = std::min(p.steps_fraction, 0.95);
    return p;
}

void to_json(nlohmann::json &j, const EffectProfile &p) {
    j = nlohmann::json{{"resting_hr_bpm", p.resting_hr_bpm},
                       {"steps_fraction", p.steps_fraction},
                       {"sleep_minutes", p.sleep_minutes}};
}

void from_json(const nlohmann::json &j, EffectProfile &p) {
    const EffectProfile d;
    for (const auto &item : j.items()) {
        if (item.key() != "resting_hr_bpm" && item.key() != "steps_fraction" &&
            item.key() != "sleep_minutes") {
            throw Error(fmt::format("unknown effect profile key '{}'", item.key()));
        }
    }
    p.resting_hr_bpm = j.value("resting_hr_bpm", d.resting_hr_bpm);
    p.steps_fraction = j.value("steps_fraction", d.steps_fraction);
    p.sleep_minutes = j.value("sleep_minutes", d.sleep_minutes);
}

void to_json(nlohmann::json &j, const ScenarioConfig &c) {
    j = nlohmann::json{
        {"participants", c.participants},
        {"days", c.days},
        {"start_date", c.start_date},
        {"cadence_days", c.cadence_days},
        {"cadence_jitter_days", c.cadence_jitter_days},
        {"baseline_assessments", c.baseline_assessments},
        {"resting_hr_mean", c.resting_hr_mean},
        {"resting_hr_sd", c.resting_hr_sd},
        {"steps_mean", c.steps_mean},
        {"steps_sd", c.steps_sd},
        {"sleep_mean", c.sleep_mean},
        {"sleep_sd", c.sleep_sd},
        {"resting_hr_noise_sd", c.resting_hr_noise_sd},
        {"steps_log_sd", c.steps_log_sd},
        {"sleep_noise_sd", c.sleep_noise_sd},
        {"weekly_amplitude", c.weekly_amplitude},
        {"episode_rate", c.episode_rate},
        {"episodes_per_participant", c.episodes_per_participant},
        {"category_mix", c.category_mix},
        {"large_delta_probability", c.large_delta_probability},
        {"effect", c.effect},
        {"category_effect_scale", c.category_effect_scale},
        {"category_effect", c.category_effect},
        {"large_effect_scale", c.large_effect_scale},
        {"ramp_days", c.ramp_days},
        {"missing_day_rate", c.missing_day_rate},
        {"minute_dropout_rate", c.minute_dropout_rate},
        {"covid_rate", c.covid_rate},
        {"covid_baseline_rate", c.covid_baseline_rate},
        {"seed", c.seed},
    };
}

void from_json(const nlohmann::json &j, ScenarioConfig &c) {
    if (!j.is_object()) {
        throw Error("scenario configuration must be a JSON object");
    }
    const nlohmann::json defaults = ScenarioConfig{};
    for (const auto &item : j.items()) {
        if (!defaults.contains(item.key())) {
            throw Error(fmt::format("unknown scenario key '{}'", item.key()));
        }
    }
    nlohmann::json merged = defaults;
    for (const auto &item : j.items()) {
        merged[item.key()] = item.value();
    }
    c.participants = merged.at("participants").get<int>();
    c.days = merged.at("days").get<int>();
    c.start_date = merged.at("start_date").get<std::string>();
    c.cadence_days = merged.at("cadence_days").get<int>();
    c.cadence_jitter_days = merged.at("cadence_jitter_days").get<int>();
    c.baseline_assessments = merged.at("baseline_assessments").get<int>();
    c.resting_hr_mean = merged.at("resting_hr_mean").get<double>();
    c.resting_hr_sd = merged.at("resting_hr_sd").get<double>();
    c.steps_mean = merged.at("steps_mean").get<double>();
    c.steps_sd = merged.at("steps_sd").get<double>();
    c.sleep_mean = merged.at("sleep_mean").get<double>();
    c.sleep_sd = merged.at("sleep_sd").get<double>();
    c.resting_hr_noise_sd = merged.at("resting_hr_noise_sd").get<double>();
    c.steps_log_sd = merged.at("steps_log_sd").get<double>();
    c.sleep_noise_sd = merged.at("sleep_noise_sd").get<double>();
    c.weekly_amplitude = merged.at("weekly_amplitude").get<double>();
    c.episode_rate = merged.at("episode_rate").get<double>();
    c.episodes_per_participant = merged.at("episodes_per_participant").get<int>();
    c.category_mix = merged.at("category_mix").get<std::map<std::string, double>>();
    c.large_delta_probability = merged.at("large_delta_probability").get<double>();
    c.effect = merged.at("effect").get<EffectProfile>();
    c.category_effect_scale = merged.at("category_effect_scale").get<std::map<std::string, double>>();
    c.category_effect = merged.at("category_effect").get<std::map<std::string, EffectProfile>>();
    c.large_effect_scale = merged.at("large_effect_scale").get<double>();
    c.ramp_days = merged.at("ramp_days").get<int>();
    c.missing_day_rate = merged.at("missing_day_rate").get<double>();
    c.minute_dropout_rate = merged.at("minute_dropout_rate").get<double>();
    c.covid_rate = merged.at("covid_rate").get<double>();
    c.covid_baseline_rate = merged.at("covid_baseline_rate").get<double>();
    c.seed = merged.at("seed").get<std::uint64_t>();
}

std::size_t GroundTruth::episode_count() const {
    std::size_t n = 0;
    for (const auto &p : participants) {
        n += p.episodes.size();
    }
    return n;
}

nlohmann::json ground_truth_to_json(const GroundTruth &truth) {
    auto participants = nlohmann::json::array();
    for (const auto &p : truth.participants) {
        nlohmann::json jp;
        jp["participant_id"] = p.participant_id;
        if (p.normal_span) {
            jp["normal_span"] = {{"start", p.normal_span->start.iso()},
                                 {"end", p.normal_span->end.iso()}};
        } else {
            jp["normal_span"] = nullptr;
        }
        auto episodes = nlohmann::json::array();
        for (const auto &e : p.episodes) {
            episodes.push_back({{"assessment_date", e.assessment_date.iso()},
                                {"category", to_string(e.category)},
                                {"magnitude_phq", to_string(e.magnitude_phq)},
                                {"magnitude_gad", to_string(e.magnitude_gad)},
                                {"effect_start", e.effect_start.iso()},
                                {"effect_end", e.effect_end.iso()}});
        }
        jp["episodes"] = std::move(episodes);
        auto covid = nlohmann::json::array();
        for (Date d : p.covid_dates) {
            covid.push_back(d.iso());
        }
        jp["covid_dates"] = std::move(covid);
        participants.push_back(std::move(jp));
    }
    return {{"participants", std::move(participants)}};
}

GroundTruth ground_truth_from_json(const nlohmann::json &j) {
    GroundTruth truth;
    for (const auto &jp : j.at("participants")) {
        ParticipantTruth p;
        p.participant_id = jp.at("participant_id").get<std::string>();
        if (!jp.at("normal_span").is_null()) {
            p.normal_span = DateInterval{
                Date::parse(jp.at("normal_span").at("start").get<std::string>()),
                Date::parse(jp.at("normal_span").at("end").get<std::string>())};
        }
        for (const auto &je : jp.at("episodes")) {
            InjectedEpisode e;
            e.assessment_date = Date::parse(je.at("assessment_date").get<std::string>());
            e.category = episode_category_from_string(je.at("category").get<std::string>());
            e.magnitude_phq = magnitude_from_string(je.at("magnitude_phq").get<std::string>());
            e.magnitude_gad = magnitude_from_string(je.at("magnitude_gad").get<std::string>());
            e.effect_start = Date::parse(je.at("effect_start").get<std::string>());
            e.effect_end = Date::parse(je.at("effect_end").get<std::string>());
            p.episodes.push_back(e);
        }
        for (const auto &jd : jp.at("covid_dates")) {
            p.covid_dates.push_back(Date::parse(jd.get<std::string>()));
        }
        truth.participants.push_back(std::move(p));
    }
    return truth;
}

std::vector<ParticipantPlan> plan_cohort(const ScenarioConfig &config) {
    config.validate();
    const Date start = Date::parse(config.start_date);
    const LabelingConfig rules;
    const int nb = config.baseline_assessments;

    std::vector<ParticipantPlan> plans(static_cast<std::size_t>(config.participants));
    std::vector<BaselineSums> sums(plans.size());
    std::vector<bool> baseline_voided(plans.size(), false);
    std::vector<std::vector<int>> offsets(plans.size());

    for (std::size_t i = 0; i < plans.size(); ++i) {
        Rng rng(derive_seed(config.seed, 1000 + i));
        auto &plan = plans[i];
        plan.truth.participant_id = fmt::format("P{:04d}", i);
        plan.resting_hr = sample_clamped(rng, config.resting_hr_mean, config.resting_hr_sd, 45.0, 90.0);
        plan.steps = sample_clamped(rng, config.steps_mean, config.steps_sd,
                                    0.25 * config.steps_mean, 2.5 * config.steps_mean);
        plan.sleep = sample_clamped(rng, config.sleep_mean, config.sleep_sd, 300.0, 560.0);
        plan.weekly_phase = rng.integer(0, 6);
        plan.stream_seed = derive_seed(config.seed, 500000 + i);

        auto &days = offsets[i];
        int d = rng.integer(0, std::min(6, config.cadence_days - 1));
        while (d < config.days) {
            days.push_back(d);
            d += config.cadence_days + rng.integer(0, config.cadence_jitter_days);
        }
        const bool has_baseline = static_cast<int>(days.size()) >= nb &&
                                  days[static_cast<std::size_t>(nb - 1)] - days[0] >=
                                      rules.min_normal_span_days &&
                                  nb >= rules.min_normal_assessments;

        // Baseline scores in [1, 4]: low, yet leaving room for a "mild" 5.
        for (int k = 0; k < std::min<int>(nb, static_cast<int>(days.size())); ++k) {
            Assessment a{start + days[static_cast<std::size_t>(k)], rng.integer(1, 4),
                         rng.integer(1, 4)};
            sums[i].phq += a.phq8;
            sums[i].gad += a.gad7;
            ++sums[i].n;
            plan.assessments.push_back(a);
        }

        if (has_baseline) {
            const Date b0 = start + days.front();
            const Date b1 = start + days[static_cast<std::size_t>(nb - 1)];
            if (rng.bernoulli(config.covid_baseline_rate)) {
                baseline_voided[i] = true;
                plan.truth.covid_dates.push_back(b0 + rng.integer(0, b1 - b0));
            } else {
                plan.truth.normal_span = DateInterval{b0, b1};
                const int first = days[static_cast<std::size_t>(nb - 1)] + rules.covid_days_before + 1;
                if (first < config.days && rng.bernoulli(config.covid_rate)) {
                    plan.truth.covid_dates.push_back(start + rng.integer(first, config.days - 1));
                }
            }
        }
    }

    // Exactly round(rate * eligible) participants receive episodes.
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < plans.size(); ++i) {
        if (plans[i].truth.normal_span) {
            eligible.push_back(i);
        }
    }
    Rng selector(derive_seed(config.seed, 7));
    selector.shuffle(std::span<std::size_t>(eligible));
    const auto chosen_count = static_cast<std::size_t>(
        std::llround(config.episode_rate * static_cast<double>(eligible.size())));
    std::vector<bool> chosen(plans.size(), false);
    for (std::size_t k = 0; k < chosen_count; ++k) {
        chosen[eligible[k]] = true;
    }

    for (std::size_t i = 0; i < plans.size(); ++i) {
        auto &plan = plans[i];
        const auto &days = offsets[i];
        Rng rng(derive_seed(config.seed, 200000 + i));
        const auto &s = sums[i];

        std::vector<std::size_t> episode_idx;
        if (chosen[i]) {
            const int earliest = days[static_cast<std::size_t>(nb - 1)] + kEpisodeLeadDays;
            const int latest = config.days - 1 - rules.anomalous_days_after;
            std::vector<std::size_t> candidates;
            for (std::size_t k = static_cast<std::size_t>(nb); k < days.size(); ++k) {
                if (days[k] >= earliest && days[k] <= latest) {
                    candidates.push_back(k);
                }
            }
            for (int e = 0; e < config.episodes_per_participant; ++e) {
                if (candidates.empty()) {
                    throw Error(fmt::format(
                        "cannot schedule {} episode(s) for participant {} within {} days",
                        config.episodes_per_participant, plan.truth.participant_id, config.days));
                }
                const auto pick = candidates[rng.below(candidates.size())];
                episode_idx.push_back(pick);
                std::erase_if(candidates, [&](std::size_t k) {
                    return std::abs(days[k] - days[pick]) < kEpisodeSpacingDays;
                });
            }
            std::sort(episode_idx.begin(), episode_idx.end());
        }

        int low_run = 0;
        for (std::size_t k = static_cast<std::size_t>(nb); k < days.size(); ++k) {
            Assessment a{start + days[k], 0, 0};
            const bool is_episode =
                std::find(episode_idx.begin(), episode_idx.end(), k) != episode_idx.end();
            if (is_episode) {
                InjectedEpisode e;
                e.assessment_date = a.date;
                e.category = draw_category(rng, config.category_mix);
                e.effect_start = a.date - rules.anomalous_days_before;
                e.effect_end = a.date + rules.anomalous_days_after;
                const bool raise_phq = e.category != EpisodeCategory::kGadOnly;
                const bool raise_gad = e.category != EpisodeCategory::kPhqOnly;
                auto raise = [&](int sum, Magnitude &magnitude) {
                    const bool large = rng.bernoulli(config.large_delta_probability);
                    magnitude = large ? Magnitude::kD10Plus : Magnitude::kD5to9;
                    const int target = large ? rng.integer(rules.large_delta, rules.large_delta + 2)
                                             : rng.integer(rules.episode_delta, rules.large_delta - 1);
                    return raised_score(sum, s.n, target);
                };
                a.phq8 = raise_phq ? raise(s.phq, e.magnitude_phq) : rng.integer(0, 4);
                a.gad7 = raise_gad ? raise(s.gad, e.magnitude_gad) : rng.integer(0, 4);
                plan.truth.episodes.push_back(e);
                low_run = 0;
            } else {
                const bool mild = k == static_cast<std::size_t>(nb) || low_run >= kMaxLowRun ||
                                  rng.bernoulli(kMildProbability);
                a.phq8 = rng.integer(0, 4);
                a.gad7 = rng.integer(0, 4);
                if (mild) {
                    // A 5 breaks any low-score run; with a baseline mean of at
                    // least 1 its delta stays below the episode threshold.
                    if (rng.bernoulli(0.5)) {
                        a.phq8 = rules.normal_score_limit;
                    } else {
                        a.gad7 = rules.normal_score_limit;
                    }
                    low_run = 0;
                } else {
                    ++low_run;
                }
            }
            plan.assessments.push_back(a);
        }
        if (baseline_voided[i] || !plan.truth.normal_span) {
            plan.truth.episodes.clear();
        }
    }
    return plans;
}

Participant render_participant(const ScenarioConfig &config, const ParticipantPlan &plan) {
    const Date start = Date::parse(config.start_date);
    Rng rng(plan.stream_seed);
    Participant p;
    p.id = plan.truth.participant_id;
    p.assessments = plan.assessments;
    for (Date d : plan.truth.covid_dates) {
        p.covid_events.push_back({d});
    }
    p.minutes.reserve(static_cast<std::size_t>(config.days) * kMinutesPerDay);

    struct ActiveEffect {
        DateInterval window;
        EffectProfile profile;
    };
    std::vector<ActiveEffect> effects;
    for (const auto &e : plan.truth.episodes) {
        const bool large = std::max(e.magnitude_phq, e.magnitude_gad) == Magnitude::kD10Plus;
        effects.push_back({{e.effect_start, e.effect_end}, config.effect_for(e.category, large)});
    }

    std::vector<int> day_steps;
    for (int t = 0; t < config.days; ++t) {
        const Date date = start + t;

        // Episode effects ramp in and out linearly over ramp_days.
        EffectProfile eff{0.0, 0.0, 0.0};
        for (const auto &a : effects) {
            if (!a.window.contains(date)) {
                continue;
            }
            const int from_start = date - a.window.start + 1;
            const int to_end = a.window.end - date + 1;
            const double w =
                std::min(1.0, static_cast<double>(std::min(from_start, to_end)) / config.ramp_days);
            eff.resting_hr_bpm = std::max(eff.resting_hr_bpm, w * a.profile.resting_hr_bpm);
            eff.steps_fraction = std::max(eff.steps_fraction, w * a.profile.steps_fraction);
            eff.sleep_minutes = std::max(eff.sleep_minutes, w * a.profile.sleep_minutes);
        }

        const bool weekend = (date.weekday() + plan.weekly_phase) % 7 >= 5;
        const double lift = weekend ? config.weekly_amplitude : 0.0;
        const double rhr = plan.resting_hr + rng.normal(0.0, config.resting_hr_noise_sd) +
                           eff.resting_hr_bpm;
        const double steps = plan.steps * std::exp(rng.normal(0.0, config.steps_log_sd)) *
                             (1.0 + lift) * (1.0 - eff.steps_fraction);
        const double sleep = std::clamp(plan.sleep * (1.0 + 0.5 * lift) +
                                            rng.normal(0.0, config.sleep_noise_sd) -
                                            eff.sleep_minutes,
                                        180.0, 720.0);
        if (rng.bernoulli(config.missing_day_rate)) {
            continue; // device not worn
        }

        // Night: asleep minutes with evenly spread awakenings, from midnight.
        const int asleep = static_cast<int>(std::lround(sleep));
        const int awake = rng.integer(10, 30);
        const int bed = asleep + awake;
        std::vector<SleepStage> stage(kMinutesPerDay, SleepStage::kNone);
        for (int m = 0; m < bed; ++m) {
            const int c = m % 90;
            stage[m] = c < 10 ? SleepStage::kLight
                       : c < 30 ? SleepStage::kDeep
                       : c < 70 ? SleepStage::kLight
                                : SleepStage::kRem;
        }
        for (int k = 0; k < awake; ++k) {
            stage[static_cast<std::size_t>((2 * k + 1) * bed / (2 * awake))] = SleepStage::kAwake;
        }

        // Day: alternating sedentary and active bouts carrying the day's steps.
        std::vector<bool> active(kMinutesPerDay, false);
        int active_minutes = 0;
        for (int m = bed; m < kMinutesPerDay;) {
            m += rng.integer(8, 45);
            const int len = rng.integer(5, 35);
            for (int k = m; k < std::min(m + len, kMinutesPerDay); ++k) {
                active[k] = true;
                ++active_minutes;
            }
            m += len;
        }
        const double per_minute = active_minutes > 0 ? steps / active_minutes : 0.0;

        for (int m = 0; m < kMinutesPerDay; ++m) {
            MinuteRecord r{date, m, std::nullopt, std::nullopt, stage[m]};
            double hr;
            int s = 0;
            if (m < bed) {
                hr = stage[m] == SleepStage::kAwake ? rhr + rng.normal(0.0, 2.0)
                                                    : rhr - 2.0 + rng.normal(0.0, 1.5);
            } else if (active[m]) {
                s = std::clamp(static_cast<int>(std::lround(per_minute * rng.uniform(0.6, 1.4))), 1, 250);
                hr = rhr + 20.0 + 0.15 * s + rng.normal(0.0, 4.0);
            } else {
                hr = rhr + 4.0 + rng.normal(0.0, 2.0);
            }
            if (!rng.bernoulli(config.minute_dropout_rate)) {
                r.heart_rate = std::clamp(std::round(hr), 30.0, 220.0);
                r.steps = s;
            }
            if (r.heart_rate || r.steps || r.sleep_stage != SleepStage::kNone) {
                p.minutes.push_back(r);
            }
        }
    }
    return p;
}

std::pair<Cohort, GroundTruth> generate_cohort(const ScenarioConfig &config) {
    const auto plans = plan_cohort(config);
    Cohort cohort;
    GroundTruth truth;
    for (const auto &plan : plans) {
        cohort.participants.push_back(render_participant(config, plan));
        truth.participants.push_back(plan.truth);
    }
    cohort.metadata["generator"] = "synthetic";
    cohort.metadata["seed"] = std::to_string(config.seed);
    return {std::move(cohort), std::move(truth)};
}

} // namespace wearad
