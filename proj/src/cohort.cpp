#include "wearad/cohort.hpp"

#include "wearad/error.hpp"

#include <algorithm>
#include <array>
#include <initializer_list>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace wearad {

using nlohmann::json;

std::string_view to_string(SleepStage stage) {
    switch (stage) {
    case SleepStage::kNone:
        return "none";
    case SleepStage::kAwake:
        return "awake";
    case SleepStage::kLight:
        return "light";
    case SleepStage::kDeep:
        return "deep";
    case SleepStage::kRem:
        return "rem";
    }
    return "none";
}

std::optional<SleepStage> sleep_stage_from_string(std::string_view text) {
    static constexpr std::array<SleepStage, 5> kAll{SleepStage::kNone, SleepStage::kAwake,
                                                    SleepStage::kLight, SleepStage::kDeep,
                                                    SleepStage::kRem};
    for (auto s : kAll) {
        if (to_string(s) == text) {
            return s;
        }
    }
    return std::nullopt;
}

const Participant *Cohort::find(std::string_view id) const {
    for (const auto &p : participants) {
        if (p.id == id) {
            return &p;
        }
    }
    return nullptr;
}

namespace {

struct Pending {
    Participant participant;
    bool declared = false;
    std::vector<std::size_t> minute_lines;
    std::vector<std::size_t> assessment_lines;
};

void require_exact_fields(const json &rec, std::initializer_list<std::string_view> fields,
                          std::size_t line) {
    for (auto name : fields) {
        if (!rec.contains(std::string(name))) {
            throw ParseError(line, fmt::format("missing field '{}'", name));
        }
    }
    for (const auto &item : rec.items()) {
        if (std::find(fields.begin(), fields.end(), item.key()) == fields.end()) {
            throw ParseError(line, fmt::format("unexpected field '{}'", item.key()));
        }
    }
}

std::string get_string(const json &rec, std::string_view field, std::size_t line) {
    const auto &v = rec.at(std::string(field));
    if (!v.is_string()) {
        throw ParseError(line, fmt::format("field '{}' must be a string", field));
    }
    return v.get<std::string>();
}

Date get_date(const json &rec, std::size_t line) {
    const auto text = get_string(rec, "date", line);
    try {
        return Date::parse(text);
    } catch (const Error &e) {
        throw ParseError(line, fmt::format("field 'date': {}", e.what()));
    }
}

long long get_integer(const json &rec, std::string_view field, std::size_t line) {
    const auto &v = rec.at(std::string(field));
    if (!v.is_number_integer()) {
        throw ParseError(line, fmt::format("field '{}' must be an integer", field));
    }
    return v.get<long long>();
}

int get_score(const json &rec, std::string_view field, int max, std::size_t line) {
    const auto value = get_integer(rec, field, line);
    if (value < 0 || value > max) {
        throw ParseError(line,
                         fmt::format("field '{}' = {} outside range [0,{}]", field, value, max));
    }
    return static_cast<int>(value);
}

} // namespace

ParseResult parse_cohort(std::istream &in, const ParseOptions &options) {
    ParseResult result;
    std::vector<Pending> pending;
    std::unordered_map<std::string, std::size_t> index;

    auto slot = [&](const std::string &id) -> Pending & {
        auto [it, inserted] = index.try_emplace(id, pending.size());
        if (inserted) {
            pending.emplace_back();
            pending.back().participant.id = id;
        }
        return pending[it->second];
    };

    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (!text.empty() && text.back() == '\r') {
            text.pop_back();
        }
        if (text.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        json rec;
        try {
            rec = json::parse(text);
        } catch (const json::parse_error &e) {
            throw ParseError(line, fmt::format("invalid JSON: {}", e.what()));
        }
        if (!rec.is_object()) {
            throw ParseError(line, "record must be a JSON object");
        }
        if (!rec.contains("kind")) {
            throw ParseError(line, "missing field 'kind'");
        }
        if (!rec.contains("participant_id")) {
            throw ParseError(line, "missing field 'participant_id'");
        }
        const auto kind = get_string(rec, "kind", line);
        const auto pid = get_string(rec, "participant_id", line);
        if (pid.empty()) {
            throw ParseError(line, "field 'participant_id' must be non-empty");
        }

        if (kind == "participant_meta") {
            require_exact_fields(rec, {"kind", "participant_id"}, line);
            auto &p = slot(pid);
            if (p.declared) {
                throw ParseError(line, fmt::format("duplicate participant id '{}'", pid));
            }
            p.declared = true;
        } else if (kind == "assessment") {
            require_exact_fields(rec, {"kind", "participant_id", "date", "phq8", "gad7"}, line);
            Assessment a;
            a.date = get_date(rec, line);
            a.phq8 = get_score(rec, "phq8", kMaxPhq8, line);
            a.gad7 = get_score(rec, "gad7", kMaxGad7, line);
            auto &p = slot(pid);
            p.participant.assessments.push_back(a);
            p.assessment_lines.push_back(line);
        } else if (kind == "covid") {
            require_exact_fields(rec, {"kind", "participant_id", "date"}, line);
            slot(pid).participant.covid_events.push_back(CovidEvent{get_date(rec, line)});
        } else if (kind == "minute") {
            require_exact_fields(rec,
                                 {"kind", "participant_id", "date", "minute", "heart_rate", "steps",
                                  "sleep_stage"},
                                 line);
            MinuteRecord m;
            m.date = get_date(rec, line);
            const auto minute = get_integer(rec, "minute", line);
            if (minute < 0 || minute >= kMinutesPerDay) {
                throw ParseError(line,
                                 fmt::format("field 'minute' = {} outside range [0,1439]", minute));
            }
            m.minute = static_cast<int>(minute);

            const auto &hr = rec.at("heart_rate");
            if (!hr.is_null()) {
                if (!hr.is_number()) {
                    throw ParseError(line, "field 'heart_rate' must be a number or null");
                }
                const double value = hr.get<double>();
                if (!(value > kMinHeartRate && value < kMaxHeartRate)) {
                    const auto msg = fmt::format(
                        "field 'heart_rate' = {} outside plausible range (20,250)", value);
                    if (options.strict) {
                        throw ParseError(line, msg);
                    }
                    result.warnings.push_back(fmt::format("line {}: {}", line, msg));
                }
                m.heart_rate = value;
            }

            const auto &steps = rec.at("steps");
            if (!steps.is_null()) {
                if (!steps.is_number_integer()) {
                    throw ParseError(line, "field 'steps' must be an integer or null");
                }
                const auto value = steps.get<long long>();
                if (value < 0) {
                    throw ParseError(line, fmt::format("field 'steps' = {} is negative", value));
                }
                m.steps = static_cast<int>(value);
            }

            const auto &stage = rec.at("sleep_stage");
            if (!stage.is_null()) {
                if (!stage.is_string()) {
                    throw ParseError(line, "field 'sleep_stage' must be a string or null");
                }
                const auto parsed = sleep_stage_from_string(stage.get<std::string>());
                if (!parsed) {
                    throw ParseError(line, fmt::format("field 'sleep_stage' has unknown value '{}'",
                                                       stage.get<std::string>()));
                }
                m.sleep_stage = *parsed;
            }
            auto &p = slot(pid);
            p.participant.minutes.push_back(m);
            p.minute_lines.push_back(line);
        } else {
            throw ParseError(line, fmt::format("field 'kind' has unknown value '{}'", kind));
        }
    }

    result.cohort.participants.reserve(pending.size());
    for (auto &p : pending) {
        auto &part = p.participant;

        // Stable sort on (date, minute), carrying source lines for error messages.
        std::vector<std::size_t> order(part.minutes.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const auto &x = part.minutes[a];
            const auto &y = part.minutes[b];
            return x.date != y.date ? x.date < y.date : x.minute < y.minute;
        });
        std::vector<MinuteRecord> sorted;
        sorted.reserve(order.size());
        for (std::size_t k = 0; k < order.size(); ++k) {
            const auto &m = part.minutes[order[k]];
            if (k > 0 && sorted.back().date == m.date && sorted.back().minute == m.minute) {
                throw ParseError(p.minute_lines[order[k]],
                                 fmt::format("duplicate minute record {} {} for participant '{}'",
                                             m.date.iso(), m.minute, part.id));
            }
            sorted.push_back(m);
        }
        part.minutes = std::move(sorted);

        std::vector<std::size_t> aorder(part.assessments.size());
        for (std::size_t i = 0; i < aorder.size(); ++i) {
            aorder[i] = i;
        }
        std::stable_sort(aorder.begin(), aorder.end(), [&](std::size_t a, std::size_t b) {
            return part.assessments[a].date < part.assessments[b].date;
        });
        std::vector<Assessment> asorted;
        asorted.reserve(aorder.size());
        for (std::size_t k = 0; k < aorder.size(); ++k) {
            const auto &a = part.assessments[aorder[k]];
            if (k > 0 && asorted.back().date == a.date) {
                throw ParseError(p.assessment_lines[aorder[k]],
                                 fmt::format("duplicate assessment date {} for participant '{}'",
                                             a.date.iso(), part.id));
            }
            asorted.push_back(a);
        }
        part.assessments = std::move(asorted);

        std::stable_sort(part.covid_events.begin(), part.covid_events.end(),
                         [](const CovidEvent &a, const CovidEvent &b) {
                             return a.report_date < b.report_date;
                         });
        result.cohort.participants.push_back(std::move(part));
    }
    return result;
}

void write_cohort(std::ostream &out, const Cohort &cohort) {
    fmt::memory_buffer buf;
    for (const auto &p : cohort.participants) {
        const std::string pid = json(p.id).dump();
        fmt::format_to(std::back_inserter(buf),
                       "{{\"kind\":\"participant_meta\",\"participant_id\":{}}}\n", pid);
        for (const auto &a : p.assessments) {
            fmt::format_to(std::back_inserter(buf),
                           "{{\"kind\":\"assessment\",\"participant_id\":{},\"date\":\"{}\","
                           "\"phq8\":{},\"gad7\":{}}}\n",
                           pid, a.date.iso(), a.phq8, a.gad7);
        }
        for (const auto &c : p.covid_events) {
            fmt::format_to(std::back_inserter(buf),
                           "{{\"kind\":\"covid\",\"participant_id\":{},\"date\":\"{}\"}}\n", pid,
                           c.report_date.iso());
        }
        Date last_date{INT32_MIN};
        std::string date_text;
        for (const auto &m : p.minutes) {
            if (m.date != last_date) {
                last_date = m.date;
                date_text = m.date.iso();
            }
            fmt::format_to(std::back_inserter(buf),
                           "{{\"kind\":\"minute\",\"participant_id\":{},\"date\":\"{}\","
                           "\"minute\":{},\"heart_rate\":",
                           pid, date_text, m.minute);
            if (m.heart_rate) {
                fmt::format_to(std::back_inserter(buf), "{}", *m.heart_rate);
            } else {
                buf.append(std::string_view{"null"});
            }
            buf.append(std::string_view{",\"steps\":"});
            if (m.steps) {
                fmt::format_to(std::back_inserter(buf), "{}", *m.steps);
            } else {
                buf.append(std::string_view{"null"});
            }
            if (m.sleep_stage == SleepStage::kNone) {
                buf.append(std::string_view{",\"sleep_stage\":null}\n"});
            } else {
                fmt::format_to(std::back_inserter(buf), ",\"sleep_stage\":\"{}\"}}\n",
                               to_string(m.sleep_stage));
            }
            if (buf.size() > (1U << 20)) {
                out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
                buf.clear();
            }
        }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

ValidationReport validate_cohort(const Cohort &cohort) {
    ValidationReport report;
    report.participants = cohort.participants.size();
    std::unordered_map<std::string, int> seen;
    for (const auto &p : cohort.participants) {
        if (++seen[p.id] == 2) {
            report.violations.push_back({p.id, "participant", "duplicate participant id"});
        }
        report.assessments += p.assessments.size();
        report.minute_records += p.minutes.size();
        report.covid_events += p.covid_events.size();

        for (std::size_t i = 0; i < p.assessments.size(); ++i) {
            const auto &a = p.assessments[i];
            const auto where = fmt::format("assessment {}", a.date.iso());
            if (a.phq8 < 0 || a.phq8 > kMaxPhq8) {
                report.violations.push_back(
                    {p.id, where, fmt::format("phq8 = {} outside range [0,24]", a.phq8)});
            }
            if (a.gad7 < 0 || a.gad7 > kMaxGad7) {
                report.violations.push_back(
                    {p.id, where, fmt::format("gad7 = {} outside range [0,21]", a.gad7)});
            }
            if (i > 0 && !(p.assessments[i - 1].date < a.date)) {
                report.violations.push_back({p.id, where, "assessment dates not strictly increasing"});
            }
        }

        for (std::size_t i = 0; i < p.minutes.size(); ++i) {
            const auto &m = p.minutes[i];
            const auto where = [&] { return fmt::format("minute {} {}", m.date.iso(), m.minute); };
            if (m.minute < 0 || m.minute >= kMinutesPerDay) {
                report.violations.push_back({p.id, where(), "minute-of-day outside [0,1439]"});
            }
            if (m.heart_rate && !(*m.heart_rate > kMinHeartRate && *m.heart_rate < kMaxHeartRate)) {
                report.violations.push_back(
                    {p.id, where(),
                     fmt::format("heart_rate = {} outside plausible range (20,250)", *m.heart_rate)});
            }
            if (m.steps && *m.steps < 0) {
                report.violations.push_back({p.id, where(), "negative steps"});
            }
            if (i > 0) {
                const auto &prev = p.minutes[i - 1];
                if (prev.date == m.date && prev.minute == m.minute) {
                    report.violations.push_back({p.id, where(), "duplicate (date, minute) record"});
                } else if (prev.date > m.date || (prev.date == m.date && prev.minute > m.minute)) {
                    report.violations.push_back({p.id, where(), "minute records out of time order"});
                }
            }
        }
    }
    return report;
}

} // namespace wearad
