// Acceptance runner: checks each numbered criterion against its oracle and
// prints one PASS/FAIL line per criterion with the measured value and time.
//
//   acceptance            run every criterion
//   acceptance 2 5 9      run only the listed criteria

#include "wearad/detector.hpp"
#include "wearad/error.hpp"
#include "wearad/evaluation.hpp"
#include "wearad/explain.hpp"
#include "wearad/features.hpp"
#include "wearad/lstm_ae.hpp"
#include "wearad/pipeline.hpp"
#include "wearad/rng.hpp"
#include "wearad/stages.hpp"
#include "wearad/synth.hpp"

#include "oracles.hpp"
#include "test_helpers.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <fmt/format.h>

namespace {

using namespace wearad;
using namespace wearad::testing;
namespace fs = std::filesystem;

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome scope_note() {
    return {true, "informational: synthetic cohorts only; checks are property- and oracle-based"};
}

Outcome gradient_check_h4() {
    const auto start = Clock::now();
    TrainConfig c;
    c.hidden_size = 4;
    c.seed = 21;
    const auto model = init_model(c);
    Rng rng(22);
    const std::vector<WindowValues> window{random_window(rng)};
    // Every parameter is checked: H=4 has fewer than 1000 coordinates.
    const auto check = gradient_check(model, window, 1e-5, model.params.size(), 23);
    const double t = seconds_since(start);
    return {check.max_relative_error < 1e-4 && check.coordinates_checked == model.params.size() && t < 10.0,
            fmt::format("max relative error {:.3e} over {} coordinates (< 1e-4), {:.2f}s (< 10s)",
                        check.max_relative_error, check.coordinates_checked, t)};
}

Outcome overfit_repeated_window() {
    const auto start = Clock::now();
    TrainConfig c;
    c.hidden_size = 16;
    c.seed = 81;
    c.learning_rate = 1e-2;
    c.batch_size = 8;
    c.max_epochs = 200;
    c.patience = 200;
    Rng rng(82);
    const std::vector<WindowValues> windows(32, random_window(rng));
    const auto [model, report] = train(windows, c);
    // First epoch at which the validation error fell below the bar.
    int reached = 0;
    for (std::size_t e = 0; e < report.validation_loss.size() && reached == 0; ++e) {
        if (report.validation_loss[e] < 1e-3) {
            reached = static_cast<int>(e) + 1;
        }
    }
    const double t = seconds_since(start);
    return {report.best_validation_loss < 1e-3 && reached > 0 && t < 60.0,
            fmt::format("best validation error {:.3e} (< 1e-3), first below at epoch {} of {}, {:.2f}s (< 60s)",
                        report.best_validation_loss, reached, report.epochs_run, t)};
}

Outcome resting_hr_equivalence() {
    Rng rng(2024);
    const Date day = Date::parse("2021-05-01");
    int mismatches = 0;
    int defined = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto minutes = random_minute_day(rng, day);
        const auto expected = resting_hr_oracle(minutes, 12);
        const auto got = resting_heart_rate(minutes, 12);
        if (got.has_value() != expected.has_value() ||
            (got && std::bit_cast<std::uint64_t>(*got) != std::bit_cast<std::uint64_t>(*expected))) {
            ++mismatches;
        }
        defined += expected ? 1 : 0;
    }
    return {mismatches == 0, fmt::format("{} bitwise mismatches over 1000 days ({} with a resting run)",
                                         mismatches, defined)};
}

Outcome adjusted_prf_equivalence() {
    Rng rng(77);
    int mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto d = random_pattern(rng);
        mismatches += adjusted_prf(d) == naive_prf(d) ? 0 : 1;
    }
    const auto hand = adjusted_prf(hand_example());
    const auto round4 = [](double x) { return std::round(x * 1e4) / 1e4; };
    const bool hand_ok = hand.tp == 5 && hand.fp == 1.0 && hand.fn == 3 && round4(hand.precision) == 0.8333 &&
                         round4(hand.recall) == 0.625 && round4(hand.f_score) == 0.7143;
    return {mismatches == 0 && hand_ok,
            fmt::format("{} mismatches over 1000 patterns; hand example TP={} FP={} FN={} P={:.4f} R={:.4f} F={:.4f}",
                        mismatches, hand.tp, hand.fp, hand.fn, hand.precision, hand.recall, hand.f_score)};
}

Outcome shapley_axioms() {
    const auto start = Clock::now();
    const auto model = small_model();
    const auto scorer = model_scorer(model);
    const auto bg = random_windows(20, 10);
    Rng rng(11);

    double worst_efficiency = 0.0;
    double worst_null = 0.0;
    double worst_ratio = 0.0;
    // A scorer that ignores one player: its phi must vanish.
    const int ignored = kSixPlayers[2];
    const BatchScorer blind = [&](std::span<const WindowValues> b) {
        std::vector<WindowValues> copy(b.begin(), b.end());
        for (auto &w : copy) {
            w.cells[static_cast<std::size_t>(ignored)] = 0.0;
        }
        return scorer(copy);
    };
    for (int trial = 0; trial < 5; ++trial) {
        const auto w = random_window(rng, 2.0);
        const auto exact = shapley_attributions(scorer, w, bg, exact_on(kSixPlayers));
        double total = exact.base_value;
        for (double p : exact.phi.cells) {
            total += p;
        }
        worst_efficiency = std::max(worst_efficiency, std::abs(total - exact.error));

        const auto null_exact = shapley_attributions(blind, w, bg, exact_on(kSixPlayers));
        const auto null_sampled = shapley_attributions(blind, w, bg, sampled_on(kSixPlayers, 500, 90 + trial));
        worst_null = std::max({worst_null, std::abs(null_exact.phi.cells[static_cast<std::size_t>(ignored)]),
                               std::abs(null_sampled.phi.cells[static_cast<std::size_t>(ignored)])});

        const auto sampled = shapley_attributions(scorer, w, bg, sampled_on(kSixPlayers, 2000, 12 + trial));
        worst_ratio = std::max(worst_ratio, max_deviation(exact, sampled) / error_range(scorer, w, bg));
    }
    const double t = seconds_since(start);
    return {worst_efficiency < 1e-9 && worst_null == 0.0 && worst_ratio < 0.05 && t < 120.0,
            fmt::format("efficiency gap {:.2e} (< 1e-9), null-player |phi| {:.1e}, sampled M=2000 deviation "
                        "{:.4f} x error range (< 0.05), {:.2f}s (< 120s)",
                        worst_efficiency, worst_null, worst_ratio, t)};
}

// ---- default scenario, run in process ------------------------------------

struct BenchmarkRun {
    Evaluation evaluation;
    double seconds = 0.0;
    std::size_t participants = 0;
    std::size_t windows = 0;
    std::size_t episodes = 0;
    std::size_t label_mismatches = 0;
    int epochs = 0;
};

// Participant labels against the generator's truth; returns mismatch count.
std::size_t compare_labels(const ParticipantTruth &truth, const ParticipantLabels &labels) {
    std::size_t bad = 0;
    if (truth.normal_span) {
        bad += labels.normal_periods.size() == 1 && labels.normal_periods[0].interval() == *truth.normal_span ? 0 : 1;
    } else {
        bad += labels.normal_periods.empty() ? 0 : 1;
    }
    using Key = std::tuple<int, EpisodeCategory, Magnitude, Magnitude, int, int>;
    std::set<Key> want;
    std::set<Key> got;
    for (const auto &e : truth.episodes) {
        want.emplace(e.assessment_date.days(), e.category, e.magnitude_phq, e.magnitude_gad,
                     e.effect_start.days(), e.effect_end.days());
    }
    for (const auto &e : labels.episodes) {
        got.emplace(e.assessment_date.days(), e.category, e.magnitude_phq, e.magnitude_gad,
                    e.period_start.days(), e.period_end.days());
    }
    return bad + (want == got ? 0 : 1);
}

// simulate -> label -> features -> train -> detect -> evaluate, one
// participant's minute stream at a time so memory stays small.
BenchmarkRun run_default_benchmark() {
    const auto start = Clock::now();
    PipelineConfig config;
    config.seed = 42;
    config.percentile = 95.0;
    config.apply_seed();
    config.validate();

    BenchmarkRun run;
    FeatureSet set;
    std::vector<Episode> episodes;
    for (const auto &plan : plan_cohort(config.scenario)) {
        const auto participant = render_participant(config.scenario, plan);
        const auto labeled = label_participant_days(participant, config.labeling);
        run.label_mismatches += compare_labels(plan.truth, labeled.labels);
        episodes.insert(episodes.end(), labeled.labels.episodes.begin(), labeled.labels.episodes.end());
        if (labeled.calendar) {
            const auto daily = extract_daily(participant.minutes, *labeled.calendar, config.features);
            add_participant(set, participant.id, daily, labeled.days);
        }
        ++run.participants;
    }
    const auto [model, report] = train_model(set.windows, set.series, config);
    const auto detections = detect(model, set.windows, *model.threshold);
    run.evaluation = evaluate_detections(detections, episodes, report.validation_errors, set.series, config);
    run.seconds = seconds_since(start);
    run.windows = set.windows.size();
    run.episodes = episodes.size();
    run.epochs = report.epochs_run;
    return run;
}

const BenchmarkRun &default_benchmark() {
    static const BenchmarkRun run = [] {
        std::printf("       running the default scenario in process ...\n");
        std::fflush(stdout);
        return run_default_benchmark();
    }();
    return run;
}

Outcome end_to_end_benchmark() {
    const auto &run = default_benchmark();
    const auto &ev = run.evaluation;
    const auto &mag = ev.breakdown.per_magnitude;
    const double f10 = mag.count("d10_plus") ? mag.at("d10_plus").f_score : 0.0;
    const double f59 = mag.count("d5_9") ? mag.at("d5_9").f_score : 0.0;
    const bool has_strata = ev.breakdown.episode_counts.count("d10_plus") &&
                            ev.breakdown.episode_counts.at("d10_plus") > 0 &&
                            ev.breakdown.episode_counts.at("d5_9") > 0;
    return {ev.overall.f_score >= 0.85 && has_strata && f10 >= f59 && run.seconds < 300.0,
            fmt::format("{} participants, {} episodes, {} windows, {} epochs; p95 P={:.4f} R={:.4f} F={:.4f} "
                        "(>= 0.85); F(d10_plus)={:.4f} >= F(d5_9)={:.4f}; {:.1f}s (< 300s)",
                        run.participants, run.episodes, run.windows, run.epochs, ev.overall.precision,
                        ev.overall.recall, ev.overall.f_score, f10, f59, run.seconds)};
}

Outcome label_recovery() {
    std::size_t mismatches = 0;
    std::size_t participants = 0;
    std::size_t episodes = 0;
    // Varied small scenarios, including several episodes and voided baselines.
    for (std::uint64_t seed : {1U, 2U, 3U, 4U}) {
        ScenarioConfig c;
        c.participants = 12;
        c.days = seed % 2 == 0 ? 240 : 180;
        c.episode_rate = 0.75;
        c.episodes_per_participant = seed % 2 == 0 ? 2 : 1;
        c.covid_baseline_rate = 0.2;
        c.large_delta_probability = 0.5;
        c.seed = seed;
        const auto [cohort, truth] = generate_cohort(c);
        for (std::size_t i = 0; i < truth.participants.size(); ++i) {
            mismatches += compare_labels(truth.participants[i], label_participant(cohort.participants[i]));
            episodes += truth.participants[i].episodes.size();
            ++participants;
        }
    }
    const auto &run = default_benchmark();
    mismatches += run.label_mismatches;
    participants += run.participants;
    episodes += run.episodes;
    return {mismatches == 0, fmt::format("{} mismatching participants of {} ({} episodes, 5 seeded scenarios "
                                         "including the default)",
                                         mismatches, participants, episodes)};
}

Outcome chi_square_tails() {
    double worst = 0.0;
    std::string values;
    for (double x : {6.6667, 3.841}) {
        const double p = chi_square_upper_tail(x, 1);
        const double oracle = chi2_df1_tail_oracle(x);
        worst = std::max(worst, std::abs(p - oracle));
        values += fmt::format("p({})={:.8f} ", x, p);
    }
    return {worst < 1e-6, fmt::format("{}max |p - oracle| {:.2e} (< 1e-6)", values, worst)};
}

Outcome determinism() {
    const auto start = Clock::now();
    auto config = nlohmann::json{{"scenario", {{"participants", 8}, {"days", 150}, {"episode_rate", 0.5}}},
                                 {"train", {{"hidden_size", 16}, {"max_epochs", 20}}},
                                 {"explain",
                                  {{"background_size", 10},
                                   {"permutations", 20},
                                   {"max_windows_per_episode", 3},
                                   {"max_false_alarm_windows", 5}}},
                                 {"seed", 42}}
                      .get<PipelineConfig>();
    const auto base = fs::temp_directory_path() / fmt::format("wearad_acceptance_{}", ::getpid());
    fs::remove_all(base);
    std::vector<fs::path> runs{base / "run1", base / "run2"};
    for (const auto &dir : runs) {
        for (auto stage : kStages) {
            run_stage(stage, dir, config);
        }
    }
    std::vector<std::string> differing;
    for (const auto *name : {"metrics.json", "model.json"}) {
        if (slurp(runs[0] / name) != slurp(runs[1] / name) || slurp(runs[0] / name).empty()) {
            differing.emplace_back(name);
        }
    }
    fs::remove_all(base);
    const double t = seconds_since(start);
    return {differing.empty(),
            fmt::format("two full stage runs (8 participants x 150 days, seed 42): {}; {:.1f}s",
                        differing.empty() ? "metrics.json and model.json byte-identical"
                                          : "differ: " + join(differing, ','),
                        t)};
}

Outcome sweep_monotonicity() {
    const auto &sweep = default_benchmark().evaluation.sweep;
    bool monotone = !sweep.empty() && sweep.front().percentile == 90.0 && sweep.back().percentile == 100.0;
    std::string counts;
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        monotone = monotone && (i == 0 || sweep[i].flagged <= sweep[i - 1].flagged);
        counts += fmt::format("{}{}", i == 0 ? "" : " ", sweep[i].flagged);
    }
    return {monotone, fmt::format("flagged windows at p90..p100: {}", counts)};
}

} // namespace

int main(int argc, char **argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"scope", scope_note},
        {"gradient check (H=4, h=1e-5)", gradient_check_h4},
        {"overfit oracle (32 copies)", overfit_repeated_window},
        {"resting-HR oracle equivalence", resting_hr_equivalence},
        {"adjusted-PRF oracle equivalence", adjusted_prf_equivalence},
        {"Shapley axioms", shapley_axioms},
        {"end-to-end default scenario", end_to_end_benchmark},
        {"label recovery", label_recovery},
        {"chi-square tails", chi_square_tails},
        {"determinism", determinism},
        {"threshold sweep monotonicity", sweep_monotonicity},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) {
        selected.insert(std::atoi(argv[i]));
    }
    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int number = static_cast<int>(k) + 1;
        if (!selected.empty() && !selected.count(number)) {
            continue;
        }
        const auto start = Clock::now();
        Outcome outcome;
        try {
            outcome = criteria[k].second();
        } catch (const std::exception &e) {
            outcome = {false, fmt::format("threw: {}", e.what())};
        }
        const char *status = number == 1 ? "INFO" : outcome.pass ? "PASS" : "FAIL";
        failures += outcome.pass ? 0 : 1;
        std::printf("[%s] %2d %s: %s [%.1fs]\n", status, number, criteria[k].first.c_str(),
                    outcome.detail.c_str(), seconds_since(start));
        std::fflush(stdout);
    }
    std::printf("%s\n", failures == 0 ? "ALL CRITERIA PASS" : fmt::format("{} CRITERIA FAIL", failures).c_str());
    return failures == 0 ? 0 : 1;
}
