#include "wearad/stages.hpp"

#include "wearad/serialization.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

namespace wearad {

namespace fs = std::filesystem;

namespace {

// ---- file plumbing -----------------------------------------------------

fs::path require(const fs::path &workdir, const std::string &name, Stage producer) {
    auto path = workdir / name;
    if (!fs::exists(path)) {
        throw MissingInputError(name, producer);
    }
    return path;
}

void write_atomic(const fs::path &path, const std::function<void(std::ostream &)> &body) {
    fs::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(fmt::format("cannot write {}", tmp.string()));
        }
        body(out);
        out.flush();
        if (!out) {
            throw Error(fmt::format("write to {} failed", tmp.string()));
        }
    }
    fs::rename(tmp, path);
}

void write_json(const fs::path &path, const nlohmann::json &j) {
    write_atomic(path, [&](std::ostream &out) { out << j.dump(2) << '\n'; });
}

nlohmann::json read_json(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(fmt::format("cannot read {}", path.string()));
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        throw Error(fmt::format("{}: {}", path.string(), e.what()));
    }
}

CsvTable read_table(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(fmt::format("cannot read {}", path.string()));
    }
    return read_csv(in, path.filename().string());
}

void write_csv(const fs::path &path, const Provenance &prov, std::vector<std::string> header,
               const std::function<void(CsvWriter &)> &rows) {
    write_atomic(path, [&](std::ostream &out) {
        CsvWriter writer(out, prov, std::move(header));
        rows(writer);
    });
}

std::string opt(const std::optional<double> &v) { return v ? format_double(*v) : std::string(); }

std::optional<double> parse_opt(const std::string &text) {
    if (text.empty()) {
        return std::nullopt;
    }
    return parse_double(text);
}

std::string bool_text(bool b) { return b ? "1" : "0"; }

bool parse_bool(const std::string &text) {
    if (text == "1") {
        return true;
    }
    if (text == "0") {
        return false;
    }
    throw Error(fmt::format("'{}' is not 0 or 1", text));
}

// Column access by name for one table.
class Columns {
public:
    explicit Columns(const CsvTable &table) : table_{table} {}

    const std::string &get(const std::vector<std::string> &row, std::string_view name) {
        auto it = cache_.find(std::string(name));
        if (it == cache_.end()) {
            it = cache_.emplace(std::string(name), table_.column(name)).first;
        }
        return row[it->second];
    }

private:
    const CsvTable &table_;
    std::unordered_map<std::string, std::size_t> cache_;
};

std::string cell_column(int day, Feature f) { return fmt::format("d{}_{}", day, to_string(f)); }

Cohort load_cohort(const fs::path &workdir, const PipelineConfig &config,
                   std::vector<std::string> &warnings) {
    const fs::path path = config.cohort.empty() ? require(workdir, "cohort.jsonl", Stage::kSimulate)
                                                : fs::path(config.cohort);
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(fmt::format("cannot read cohort {}", path.string()));
    }
    auto parsed = parse_cohort(in, ParseOptions{config.strict});
    for (auto &w : parsed.warnings) {
        warnings.push_back(std::move(w));
    }
    const auto report = validate_cohort(parsed.cohort);
    if (!report.ok()) {
        std::string text;
        for (std::size_t i = 0; i < std::min<std::size_t>(report.violations.size(), 5); ++i) {
            const auto &v = report.violations[i];
            text += fmt::format("\n  {} {}: {}", v.participant_id, v.location, v.message);
        }
        throw Error(fmt::format("cohort has {} invariant violation(s):{}", report.violations.size(), text));
    }
    return std::move(parsed.cohort);
}

// ---- typed readers -----------------------------------------------------

std::vector<Episode> read_episodes(const fs::path &path) {
    const auto t = read_table(path);
    Columns c(t);
    std::vector<Episode> out;
    for (const auto &r : t.rows) {
        Episode e;
        e.participant_id = c.get(r, "participant_id");
        e.assessment_date = Date::parse(c.get(r, "assessment_date"));
        e.category = episode_category_from_string(c.get(r, "category"));
        e.phq_delta = parse_double(c.get(r, "phq_delta"));
        e.gad_delta = parse_double(c.get(r, "gad_delta"));
        e.magnitude_phq = magnitude_from_string(c.get(r, "magnitude_phq"));
        e.magnitude_gad = magnitude_from_string(c.get(r, "magnitude_gad"));
        e.period_start = Date::parse(c.get(r, "period_start"));
        e.period_end = Date::parse(c.get(r, "period_end"));
        out.push_back(std::move(e));
    }
    return out;
}

template <typename T> using ByParticipant = std::vector<std::pair<std::string, std::vector<T>>>;

template <typename T>
std::vector<T> &slot_for(ByParticipant<T> &groups, const std::string &pid) {
    if (groups.empty() || groups.back().first != pid) {
        groups.emplace_back(pid, std::vector<T>{});
    }
    return groups.back().second;
}

ByParticipant<LabeledDay> read_labels(const fs::path &path) {
    const auto t = read_table(path);
    Columns c(t);
    ByParticipant<LabeledDay> out;
    for (const auto &r : t.rows) {
        LabeledDay d;
        d.date = Date::parse(c.get(r, "date"));
        d.label = day_label_from_string(c.get(r, "label"));
        d.episode_ids = split(c.get(r, "episode_ids"), ';');
        slot_for(out, c.get(r, "participant_id")).push_back(std::move(d));
    }
    return out;
}

ByParticipant<DailyFeatures> read_daily(const fs::path &path) {
    const auto t = read_table(path);
    Columns c(t);
    ByParticipant<DailyFeatures> out;
    for (const auto &r : t.rows) {
        DailyFeatures d;
        d.date = Date::parse(c.get(r, "date"));
        d.sleep_minutes = parse_opt(c.get(r, "sleep_minutes"));
        d.total_steps = parse_opt(c.get(r, "total_steps"));
        d.resting_hr = parse_opt(c.get(r, "resting_hr"));
        d.quality_ok = parse_bool(c.get(r, "quality_ok"));
        slot_for(out, c.get(r, "participant_id")).push_back(d);
    }
    return out;
}

std::vector<Window> read_windows(const fs::path &path) {
    const auto t = read_table(path);
    Columns c(t);
    std::vector<Window> out;
    out.reserve(t.rows.size());
    for (const auto &r : t.rows) {
        Window w;
        w.participant_id = c.get(r, "participant_id");
        w.end_date = Date::parse(c.get(r, "end_date"));
        w.label = day_label_from_string(c.get(r, "label"));
        w.episode_ids = split(c.get(r, "episode_ids"), ';');
        w.missing_cells = static_cast<int>(parse_integer(c.get(r, "missing_cells")));
        for (int d = 0; d < kWindowDays; ++d) {
            for (auto f : kAllFeatures) {
                w.values(d, static_cast<int>(f)) = parse_double(c.get(r, cell_column(d, f)));
            }
        }
        out.push_back(std::move(w));
    }
    return out;
}

std::vector<Detection> read_detections(const fs::path &path) {
    const auto t = read_table(path);
    Columns c(t);
    std::vector<Detection> out;
    out.reserve(t.rows.size());
    for (const auto &r : t.rows) {
        Detection d;
        d.participant_id = c.get(r, "participant_id");
        d.end_date = Date::parse(c.get(r, "end_date"));
        d.error = parse_double(c.get(r, "error"));
        d.threshold = parse_double(c.get(r, "threshold"));
        d.flagged = parse_bool(c.get(r, "flagged"));
        d.label = day_label_from_string(c.get(r, "label"));
        d.episode_ids = split(c.get(r, "episode_ids"), ';');
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<ParticipantSeries> series_from_daily(const ByParticipant<DailyFeatures> &daily) {
    std::vector<ParticipantSeries> out;
    for (const auto &[pid, days] : daily) {
        if (auto s = prepare_series(pid, days)) {
            out.push_back(std::move(*s));
        }
    }
    return out;
}

struct TrainArtifacts {
    TrainReport report;
    std::vector<std::pair<std::string, Date>> validation_windows;
};

TrainArtifacts read_train_report(const fs::path &path) {
    const auto j = read_json(path);
    TrainArtifacts a;
    try {
        a.report = j.get<TrainReport>();
        for (const auto &v : j.at("validation_window_keys")) {
            a.validation_windows.emplace_back(v.at("participant_id").get<std::string>(),
                                              Date::parse(v.at("end_date").get<std::string>()));
        }
    } catch (const nlohmann::json::exception &e) {
        throw Error(fmt::format("{}: {}", path.string(), e.what()));
    }
    return a;
}

LstmAutoencoder read_model(const fs::path &path) { return model_from_json(read_json(path)); }

// ---- stages ------------------------------------------------------------

StageResult run_simulate(const fs::path &workdir, const PipelineConfig &config) {
    const auto prov = provenance(config);
    auto scenario = config.scenario;
    scenario.seed = config.seed;
    const auto plans = plan_cohort(scenario);
    GroundTruth truth;
    std::size_t minutes = 0;
    write_atomic(workdir / "cohort.jsonl", [&](std::ostream &out) {
        for (const auto &plan : plans) {
            Cohort one;
            one.participants.push_back(render_participant(scenario, plan));
            minutes += one.participants.back().minutes.size();
            write_cohort(out, one);
            truth.participants.push_back(plan.truth);
        }
    });
    write_json(workdir / "ground_truth.json", {{"provenance", provenance_json(prov)},
                                               {"scenario", scenario},
                                               {"ground_truth", ground_truth_to_json(truth)}});
    return {{"cohort.jsonl", "ground_truth.json"},
            {},
            fmt::format("simulated {} participants, {} minute records, {} injected episodes",
                        plans.size(), minutes, truth.episode_count())};
}

StageResult run_label(const fs::path &workdir, const PipelineConfig &config) {
    StageResult result;
    const auto cohort = load_cohort(workdir, config, result.warnings);
    const auto prov = provenance(config);

    std::vector<LabeledParticipant> labeled;
    for (const auto &p : cohort.participants) {
        labeled.push_back(label_participant_days(p, config.labeling));
    }

    write_csv(workdir / "labels.csv", prov, {"participant_id", "date", "label", "episode_ids"},
              [&](CsvWriter &w) {
                  for (const auto &l : labeled) {
                      for (const auto &d : l.days) {
                          w.row({l.participant_id, d.date.iso(), std::string(to_string(d.label)),
                                 join(d.episode_ids, ';')});
                      }
                  }
              });
    write_csv(workdir / "episodes.csv", prov,
              {"episode_id", "participant_id", "assessment_date", "category", "phq_delta",
               "gad_delta", "magnitude_phq", "magnitude_gad", "period_start", "period_end"},
              [&](CsvWriter &w) {
                  for (const auto &l : labeled) {
                      for (const auto &e : l.labels.episodes) {
                          w.row({e.id(), e.participant_id, e.assessment_date.iso(),
                                 std::string(to_string(e.category)), format_double(e.phq_delta),
                                 format_double(e.gad_delta), std::string(to_string(e.magnitude_phq)),
                                 std::string(to_string(e.magnitude_gad)), e.period_start.iso(),
                                 e.period_end.iso()});
                      }
                  }
              });
    write_csv(workdir / "normal_periods.csv", prov,
              {"participant_id", "start_date", "end_date", "assessment_count", "mean_phq8",
               "mean_gad7"},
              [&](CsvWriter &w) {
                  for (const auto &l : labeled) {
                      for (const auto &n : l.labels.normal_periods) {
                          w.row({n.participant_id, n.start_date.iso(), n.end_date.iso(),
                                 std::to_string(n.assessment_count), format_double(n.mean_phq8),
                                 format_double(n.mean_gad7)});
                      }
                  }
              });
    write_csv(workdir / "exclusions.csv", prov, {"participant_id", "start_date", "end_date"},
              [&](CsvWriter &w) {
                  for (const auto &l : labeled) {
                      for (const auto &x : l.labels.exclusions) {
                          w.row({l.participant_id, x.start.iso(), x.end.iso()});
                      }
                  }
              });

    // Cohort summary (Table 1 analogue).
    std::size_t with_normal = 0, normal_periods = 0, episodes = 0, minute_records = 0,
                assessments = 0, covid = 0, with_minutes = 0;
    std::map<std::string, std::size_t> by_category, by_magnitude, by_label;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        const auto &l = labeled[i];
        const auto &p = cohort.participants[i];
        with_normal += l.labels.normal_periods.empty() ? 0 : 1;
        normal_periods += l.labels.normal_periods.size();
        episodes += l.labels.episodes.size();
        minute_records += p.minutes.size();
        assessments += p.assessments.size();
        covid += p.covid_events.size();
        with_minutes += p.minutes.empty() ? 0 : 1;
        for (const auto &e : l.labels.episodes) {
            ++by_category[std::string(to_string(e.category))];
            ++by_magnitude[std::string(to_string(episode_magnitude(e)))];
        }
        for (const auto &d : l.days) {
            ++by_label[std::string(to_string(d.label))];
        }
    }
    write_json(workdir / "cohort_summary.json",
               {{"provenance", provenance_json(prov)},
                {"participants", cohort.participants.size()},
                {"participants_with_minutes", with_minutes},
                {"minute_records", minute_records},
                {"assessments", assessments},
                {"covid_events", covid},
                {"participants_with_normal_period", with_normal},
                {"normal_periods", normal_periods},
                {"episodes", episodes},
                {"episodes_by_category", by_category},
                {"episodes_by_magnitude", by_magnitude},
                {"days_by_label", by_label}});
    result.written = {"labels.csv", "episodes.csv", "normal_periods.csv", "exclusions.csv",
                      "cohort_summary.json"};
    result.summary = fmt::format("labeled {} participants: {} normal periods, {} episodes",
                                 labeled.size(), normal_periods, episodes);
    return result;
}

StageResult run_features(const fs::path &workdir, const PipelineConfig &config) {
    StageResult result;
    const auto labels_path = require(workdir, "labels.csv", Stage::kLabel);
    const auto cohort = load_cohort(workdir, config, result.warnings);
    const auto labels = read_labels(labels_path);
    const auto prov = provenance(config);

    FeatureSet set;
    ByParticipant<DailyFeatures> daily;
    for (const auto &[pid, days] : labels) {
        const auto *p = cohort.find(pid);
        if (p == nullptr) {
            throw Error(fmt::format("labels.csv names participant '{}' absent from the cohort", pid));
        }
        const DateInterval calendar{days.front().date, days.back().date};
        auto d = extract_daily(p->minutes, calendar, config.features);
        add_participant(set, pid, d, days);
        daily.emplace_back(pid, std::move(d));
    }

    write_csv(workdir / "daily.csv", prov,
              {"participant_id", "date", "sleep_minutes", "total_steps", "resting_hr", "quality_ok"},
              [&](CsvWriter &w) {
                  for (const auto &[pid, days] : daily) {
                      for (const auto &d : days) {
                          w.row({pid, d.date.iso(), opt(d.sleep_minutes), opt(d.total_steps),
                                 opt(d.resting_hr), bool_text(d.quality_ok)});
                      }
                  }
              });
    std::vector<std::string> header{"participant_id", "end_date",      "label",
                                    "episode_ids",    "missing_cells", "training"};
    for (int d = 0; d < kWindowDays; ++d) {
        for (auto f : kAllFeatures) {
            header.push_back(cell_column(d, f));
        }
    }
    std::size_t training = 0;
    write_csv(workdir / "windows.csv", prov, header, [&](CsvWriter &w) {
        for (const auto &win : set.windows) {
            const bool train = is_training_window(win, config.features);
            training += train ? 1 : 0;
            std::vector<std::string> row{win.participant_id,
                                         win.end_date.iso(),
                                         std::string(to_string(win.label)),
                                         join(win.episode_ids, ';'),
                                         std::to_string(win.missing_cells),
                                         bool_text(train)};
            for (double v : win.values.cells) {
                row.push_back(format_double(v));
            }
            w.row(row);
        }
    });
    nlohmann::json constants = nlohmann::json::object();
    for (const auto &s : set.series) {
        constants[s.participant_id] = s.constants;
    }
    write_json(workdir / "normalization.json",
               {{"provenance", provenance_json(prov)}, {"participants", constants}});
    result.written = {"daily.csv", "windows.csv", "normalization.json"};
    result.summary = fmt::format("{} windows from {} participants, {} normal training windows",
                                 set.windows.size(), set.series.size(), training);
    return result;
}

StageResult run_train(const fs::path &workdir, const PipelineConfig &config) {
    const auto windows = read_windows(require(workdir, "windows.csv", Stage::kFeatures));
    const auto norm = read_json(require(workdir, "normalization.json", Stage::kFeatures));
    const auto prov = provenance(config);
    std::vector<ParticipantSeries> series;
    for (const auto &item : norm.at("participants").items()) {
        ParticipantSeries s;
        s.participant_id = item.key();
        s.constants = item.value().get<NormalizationConstants>();
        series.push_back(std::move(s));
    }
    auto trained = train_model(windows, series, config);

    const auto set = training_set(windows, config.features);
    nlohmann::json keys = nlohmann::json::array();
    for (auto idx : trained.report.validation_indices) {
        const auto &w = windows[set.window_index[idx]];
        keys.push_back({{"participant_id", w.participant_id}, {"end_date", w.end_date.iso()}});
    }
    auto model_doc = model_to_json(trained.model);
    model_doc["provenance"] = provenance_json(prov);
    write_json(workdir / "model.json", model_doc);
    nlohmann::json report = trained.report;
    report["provenance"] = provenance_json(prov);
    report["validation_window_keys"] = std::move(keys);
    write_json(workdir / "train_report.json", report);
    return {{"model.json", "train_report.json"},
            {},
            fmt::format("trained H={} on {} windows ({} validation): {} epochs, best {} "
                        "(validation loss {:.6g}), threshold {:.6g} at p{}",
                        trained.model.hidden_size(), trained.report.train_windows,
                        trained.report.validation_windows, trained.report.epochs_run,
                        trained.report.best_epoch, trained.report.best_validation_loss,
                        *trained.model.threshold, config.percentile)};
}

void write_detections(const fs::path &path, const Provenance &prov,
                      std::span<const Detection> detections) {
    write_csv(path, prov,
              {"participant_id", "end_date", "error", "threshold", "flagged", "label", "episode_ids"},
              [&](CsvWriter &w) {
                  for (const auto &d : detections) {
                      w.row({d.participant_id, d.end_date.iso(), format_double(d.error),
                             format_double(d.threshold), bool_text(d.flagged),
                             std::string(to_string(d.label)), join(d.episode_ids, ';')});
                  }
              });
}

StageResult run_detect(const fs::path &workdir, const PipelineConfig &config) {
    const auto model = read_model(require(workdir, "model.json", Stage::kTrain));
    const auto train = read_train_report(require(workdir, "train_report.json", Stage::kTrain));
    const auto windows = read_windows(require(workdir, "windows.csv", Stage::kFeatures));
    const double threshold = select_threshold(train.report.validation_errors, config.percentile);
    const auto detections = detect(model, windows, threshold);
    write_detections(workdir / "detections.csv", provenance(config), detections);
    const auto flagged =
        std::count_if(detections.begin(), detections.end(), [](const Detection &d) { return d.flagged; });
    return {{"detections.csv"},
            {},
            fmt::format("flagged {} of {} windows at threshold {:.6g} (p{})", flagged,
                        detections.size(), threshold, config.percentile)};
}

StageResult run_evaluate(const fs::path &workdir, const PipelineConfig &config) {
    const auto detections = read_detections(require(workdir, "detections.csv", Stage::kDetect));
    const auto episodes = read_episodes(require(workdir, "episodes.csv", Stage::kLabel));
    const auto train = read_train_report(require(workdir, "train_report.json", Stage::kTrain));
    const auto series = series_from_daily(read_daily(require(workdir, "daily.csv", Stage::kFeatures)));
    const auto prov = provenance(config);
    const auto ev = evaluate_detections(detections, episodes, train.report.validation_errors, series, config);

    write_json(workdir / "metrics.json", metrics_json(ev, prov));
    write_csv(workdir / "threshold_sweep.csv", prov,
              {"percentile", "threshold", "flagged", "precision", "recall", "f_score"},
              [&](CsvWriter &w) {
                  for (const auto &p : ev.sweep) {
                      w.row({format_double(p.percentile), format_double(p.threshold),
                             std::to_string(p.flagged), format_double(p.prf.precision),
                             format_double(p.prf.recall), format_double(p.prf.f_score)});
                  }
              });
    write_csv(workdir / "episode_outcomes.csv", prov,
              {"episode_id", "participant_id", "assessment_date", "category", "magnitude_phq",
               "magnitude_gad", "detected", "windows", "flagged_windows", "local_false_positives",
               "f_score"},
              [&](CsvWriter &w) {
                  for (const auto &o : ev.outcomes.outcomes) {
                      w.row({o.episode_id, o.participant_id, o.assessment_date.iso(),
                             std::string(to_string(o.category)), std::string(to_string(o.magnitude_phq)),
                             std::string(to_string(o.magnitude_gad)), bool_text(o.detected),
                             std::to_string(o.windows), std::to_string(o.flagged_windows),
                             std::to_string(o.local_false_positives), format_double(o.f_score)});
                  }
              });
    write_csv(workdir / "aligned_averages.csv", prov,
              {"offset_day", "feature", "mean", "n", "sd", "ci95_half_width"}, [&](CsvWriter &w) {
                  for (const auto &a : ev.aligned) {
                      w.row({std::to_string(a.offset_day), std::string(to_string(a.feature)),
                             format_double(a.mean), std::to_string(a.n), format_double(a.sd),
                             format_double(a.ci95_half_width())});
                  }
              });
    return {{"metrics.json", "threshold_sweep.csv", "episode_outcomes.csv", "aligned_averages.csv"},
            {},
            fmt::format("p{}: P={:.4f} R={:.4f} F={:.4f} over {} episodes", ev.percentile,
                        ev.overall.precision, ev.overall.recall, ev.overall.f_score,
                        ev.outcomes.outcomes.size())};
}

StageResult run_explain(const fs::path &workdir, const PipelineConfig &config) {
    const auto model = read_model(require(workdir, "model.json", Stage::kTrain));
    const auto train = read_train_report(require(workdir, "train_report.json", Stage::kTrain));
    const auto windows = read_windows(require(workdir, "windows.csv", Stage::kFeatures));
    const auto detections = read_detections(require(workdir, "detections.csv", Stage::kDetect));
    const auto episodes = read_episodes(require(workdir, "episodes.csv", Stage::kLabel));
    const auto prov = provenance(config);

    std::map<std::pair<std::string, Date>, std::size_t> index;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        index.emplace(std::make_pair(windows[i].participant_id, windows[i].end_date), i);
    }
    std::vector<WindowValues> pool;
    for (const auto &key : train.validation_windows) {
        const auto it = index.find(key);
        if (it == index.end()) {
            throw Error("train_report.json names a validation window absent from windows.csv");
        }
        pool.push_back(windows[it->second].values);
    }
    const auto ex = explain_detections(model, windows, detections, episodes, pool, config);

    write_csv(workdir / "attributions.csv", prov,
              {"participant_id", "date", "feature", "phi", "value_normalized", "window_end_date",
               "reason"},
              [&](CsvWriter &w) {
                  for (const auto &e : ex.windows) {
                      const auto &a = e.attribution;
                      for (int d = 0; d < kWindowDays; ++d) {
                          for (auto f : kAllFeatures) {
                              const int fi = static_cast<int>(f);
                              w.row({a.participant_id, (a.end_date - (kWindowDays - 1 - d)).iso(),
                                     std::string(to_string(f)), format_double(a.phi(d, fi)),
                                     format_double(e.values(d, fi)), a.end_date.iso(), e.reason});
                          }
                      }
                  }
              });
    write_csv(workdir / "explained_windows.csv", prov,
              {"participant_id", "window_end_date", "reason", "error", "base_value", "threshold",
               "importance_sleep", "importance_steps", "importance_resting_hr", "mode",
               "permutations", "background_size", "seed"},
              [&](CsvWriter &w) {
                  for (const auto &e : ex.windows) {
                      const auto &a = e.attribution;
                      w.row({a.participant_id, a.end_date.iso(), e.reason, format_double(a.error),
                             format_double(a.base_value), format_double(e.threshold),
                             format_double(a.feature_importance[0]),
                             format_double(a.feature_importance[1]),
                             format_double(a.feature_importance[2]), std::string(to_string(a.mode)),
                             std::to_string(a.permutations), std::to_string(a.background_size),
                             std::to_string(a.seed)});
                  }
              });
    write_csv(workdir / "episode_ranks.csv", prov,
              {"episode_id", "category", "windows", "importance_sleep", "importance_steps",
               "importance_resting_hr", "rank_sleep", "rank_steps", "rank_resting_hr"},
              [&](CsvWriter &w) {
                  for (const auto &r : ex.rankings) {
                      w.row({r.episode_id, std::string(to_string(r.category)), std::to_string(r.windows),
                             format_double(r.ranking.importance[0]),
                             format_double(r.ranking.importance[1]),
                             format_double(r.ranking.importance[2]), std::to_string(r.ranking.rank[0]),
                             std::to_string(r.ranking.rank[1]), std::to_string(r.ranking.rank[2])});
                  }
              });
    write_csv(workdir / "ranks.csv", prov, {"category", "feature", "rank", "count"}, [&](CsvWriter &w) {
        for (auto c : {EpisodeCategory::kBoth, EpisodeCategory::kPhqOnly, EpisodeCategory::kGadOnly}) {
            const auto &counts = ex.table.counts(c);
            for (auto f : kAllFeatures) {
                for (int r = 1; r <= kFeatureCount; ++r) {
                    w.row({std::string(to_string(c)), std::string(to_string(f)), std::to_string(r),
                           std::to_string(counts[static_cast<std::size_t>(f)][static_cast<std::size_t>(r - 1)])});
                }
            }
        }
    });
    write_json(workdir / "rank_tests.json", rank_tests_json(ex, prov));

    std::map<std::pair<std::string, Date>, const Detection *> detection_at;
    for (const auto &d : detections) {
        detection_at.emplace(std::make_pair(d.participant_id, d.end_date), &d);
    }
    write_csv(workdir / "time_dynamic.csv", prov,
              {"participant_id", "date", "feature", "phi", "windows", "error", "threshold"},
              [&](CsvWriter &w) {
                  for (const auto &p : ex.dynamics) {
                      const auto it = detection_at.find({p.participant_id, p.date});
                      const bool scored = it != detection_at.end();
                      w.row({p.participant_id, p.date.iso(), std::string(to_string(p.feature)),
                             format_double(p.phi), std::to_string(p.windows),
                             scored ? format_double(it->second->error) : std::string(),
                             scored ? format_double(it->second->threshold) : std::string()});
                  }
              });
    return {{"attributions.csv", "explained_windows.csv", "episode_ranks.csv", "ranks.csv",
             "rank_tests.json", "time_dynamic.csv"},
            {},
            fmt::format("attributed {} windows ({} permutations, background {}); ranked {} episodes",
                        ex.windows.size(), config.explain.permutations,
                        std::min<std::size_t>(pool.size(), static_cast<std::size_t>(config.explain.background_size)),
                        ex.rankings.size())};
}

void copy_into_report(const fs::path &workdir, const std::string &name, const std::string &as) {
    const auto target = workdir / "report" / as;
    auto tmp = target;
    tmp += ".tmp";
    fs::copy_file(workdir / name, tmp, fs::copy_options::overwrite_existing);
    fs::rename(tmp, target);
}

StageResult run_report(const fs::path &workdir, const PipelineConfig &config) {
    // Inputs in pipeline order, so the first missing file names the
    // earliest stage still to run.
    const std::vector<std::pair<std::string, Stage>> inputs{
        {"cohort_summary.json", Stage::kLabel},   {"episodes.csv", Stage::kLabel},
        {"daily.csv", Stage::kFeatures},          {"train_report.json", Stage::kTrain},
        {"detections.csv", Stage::kDetect},       {"metrics.json", Stage::kEvaluate},
        {"threshold_sweep.csv", Stage::kEvaluate}, {"episode_outcomes.csv", Stage::kEvaluate},
        {"aligned_averages.csv", Stage::kEvaluate}, {"attributions.csv", Stage::kExplain},
        {"ranks.csv", Stage::kExplain},           {"episode_ranks.csv", Stage::kExplain},
        {"rank_tests.json", Stage::kExplain},     {"time_dynamic.csv", Stage::kExplain}};
    for (const auto &[name, stage] : inputs) {
        require(workdir, name, stage);
    }
    const auto prov = provenance(config);
    fs::create_directories(workdir / "report");

    auto summary = read_json(workdir / "cohort_summary.json");
    summary.erase("provenance");
    auto metrics = read_json(workdir / "metrics.json");
    metrics.erase("provenance");
    auto tests = read_json(workdir / "rank_tests.json");
    tests.erase("provenance");
    const auto train = read_json(workdir / "train_report.json");

    write_csv(workdir / "report" / "table1.csv", prov, {"quantity", "value"}, [&](CsvWriter &w) {
        for (const auto &item : summary.items()) {
            if (item.value().is_object()) {
                for (const auto &sub : item.value().items()) {
                    w.row({item.key() + "." + sub.key(), sub.value().dump()});
                }
            } else {
                w.row({item.key(), item.value().dump()});
            }
        }
    });
    write_csv(workdir / "report" / "loss_curve.csv", prov, {"epoch", "train_loss", "validation_loss"},
              [&](CsvWriter &w) {
                  const auto &tl = train.at("train_loss");
                  const auto &vl = train.at("validation_loss");
                  for (std::size_t e = 0; e < tl.size(); ++e) {
                      w.row({std::to_string(e + 1), format_double(tl[e].get<double>()),
                             format_double(vl[e].get<double>())});
                  }
              });
    // Signed dependence scatter: normalized value against phi per feature.
    const auto attributions = read_table(workdir / "attributions.csv");
    write_csv(workdir / "report" / "dependence.csv", prov, {"feature", "value_normalized", "phi"},
              [&](CsvWriter &w) {
                  Columns c(attributions);
                  for (const auto &r : attributions.rows) {
                      w.row({c.get(r, "feature"), c.get(r, "value_normalized"), c.get(r, "phi")});
                  }
              });
    const std::vector<std::pair<std::string, std::string>> copies{
        {"threshold_sweep.csv", "threshold_sweep.csv"},
        {"episode_outcomes.csv", "detection_rate.csv"},
        {"aligned_averages.csv", "aligned_averages.csv"},
        {"ranks.csv", "rank_table.csv"},
        {"episode_ranks.csv", "episode_ranks.csv"},
        {"attributions.csv", "attributions.csv"},
        {"time_dynamic.csv", "time_dynamic.csv"}};
    for (const auto &[from, to] : copies) {
        copy_into_report(workdir, from, to);
    }
    std::vector<std::string> files{"report/report.json", "report/table1.csv", "report/loss_curve.csv",
                                   "report/dependence.csv"};
    for (const auto &c : copies) {
        files.push_back("report/" + c.second);
    }
    write_json(workdir / "report" / "report.json",
               {{"provenance", provenance_json(prov)},
                {"table1", summary},
                {"training",
                 {{"epochs_run", train.at("epochs_run")},
                  {"best_epoch", train.at("best_epoch")},
                  {"best_validation_loss", train.at("best_validation_loss")},
                  {"train_windows", train.at("train_windows")},
                  {"validation_windows", train.at("validation_windows")}}},
                {"metrics", metrics},
                {"rank_tests", tests},
                {"files", files}});
    return {files, {},
            fmt::format("report bundle written to {}", (workdir / "report").string())};
}

} // namespace

std::string_view to_string(Stage stage) {
    switch (stage) {
    case Stage::kSimulate: return "simulate";
    case Stage::kLabel: return "label";
    case Stage::kFeatures: return "features";
    case Stage::kTrain: return "train";
    case Stage::kDetect: return "detect";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kExplain: return "explain";
    case Stage::kReport: return "report";
    }
    return "?";
}

std::optional<Stage> stage_from_string(std::string_view text) {
    for (auto s : kStages) {
        if (to_string(s) == text) {
            return s;
        }
    }
    return std::nullopt;
}

std::vector<std::string> stage_outputs(Stage stage) {
    switch (stage) {
    case Stage::kSimulate: return {"cohort.jsonl", "ground_truth.json"};
    case Stage::kLabel:
        return {"labels.csv", "episodes.csv", "normal_periods.csv", "exclusions.csv",
                "cohort_summary.json"};
    case Stage::kFeatures: return {"daily.csv", "windows.csv", "normalization.json"};
    case Stage::kTrain: return {"model.json", "train_report.json"};
    case Stage::kDetect: return {"detections.csv"};
    case Stage::kEvaluate:
        return {"metrics.json", "threshold_sweep.csv", "episode_outcomes.csv", "aligned_averages.csv"};
    case Stage::kExplain:
        return {"attributions.csv", "explained_windows.csv", "episode_ranks.csv", "ranks.csv",
                "rank_tests.json", "time_dynamic.csv"};
    case Stage::kReport: return {"report"};
    }
    return {};
}

MissingInputError::MissingInputError(const std::string &file, Stage producer)
    : Error(fmt::format("missing {}: run the '{}' stage first", file, to_string(producer))),
      producer_{producer} {}

StageResult run_stage(Stage stage, const fs::path &workdir, const PipelineConfig &config) {
    config.validate();
    fs::create_directories(workdir);
    switch (stage) {
    case Stage::kSimulate: return run_simulate(workdir, config);
    case Stage::kLabel: return run_label(workdir, config);
    case Stage::kFeatures: return run_features(workdir, config);
    case Stage::kTrain: return run_train(workdir, config);
    case Stage::kDetect: return run_detect(workdir, config);
    case Stage::kEvaluate: return run_evaluate(workdir, config);
    case Stage::kExplain: return run_explain(workdir, config);
    case Stage::kReport: return run_report(workdir, config);
    }
    throw Error("unknown stage");
}

} // namespace wearad
