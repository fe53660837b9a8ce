#include "wearad/features.hpp"

#include "wearad/error.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace wearad {

std::string_view to_string(Feature feature) {
    switch (feature) {
    case Feature::kSleep:
        return "sleep";
    case Feature::kSteps:
        return "steps";
    case Feature::kRestingHr:
        return "resting_hr";
    }
    return "sleep";
}

Feature feature_from_string(std::string_view text) {
    for (auto f : kAllFeatures) {
        if (to_string(f) == text) {
            return f;
        }
    }
    throw Error(fmt::format("unknown feature '{}'", text));
}

void FeatureConfig::validate() const {
    if (!(max_missing_fraction >= 0.0 && max_missing_fraction < 1.0) || resting_run_minutes < 1 ||
        !(max_window_missing_fraction > 0.0 && max_window_missing_fraction <= 1.0)) {
        throw Error("feature configuration out of range");
    }
}

std::optional<double> DailyFeatures::get(Feature f) const {
    switch (f) {
    case Feature::kSleep:
        return sleep_minutes;
    case Feature::kSteps:
        return total_steps;
    case Feature::kRestingHr:
        return resting_hr;
    }
    return std::nullopt;
}

void DailyFeatures::set(Feature f, std::optional<double> value) {
    switch (f) {
    case Feature::kSleep:
        sleep_minutes = value;
        break;
    case Feature::kSteps:
        total_steps = value;
        break;
    case Feature::kRestingHr:
        resting_hr = value;
        break;
    }
}

std::optional<double> sleep_duration(std::span<const MinuteRecord> day) {
    bool any_stage = false;
    int asleep = 0;
    for (const auto &m : day) {
        switch (m.sleep_stage) {
        case SleepStage::kNone:
            break;
        case SleepStage::kAwake:
            any_stage = true;
            break;
        case SleepStage::kLight:
        case SleepStage::kDeep:
        case SleepStage::kRem:
            any_stage = true;
            ++asleep;
            break;
        }
    }
    if (!any_stage) {
        return std::nullopt;
    }
    return static_cast<double>(asleep);
}

std::optional<double> total_steps(std::span<const MinuteRecord> day) {
    bool any = false;
    double sum = 0.0;
    for (const auto &m : day) {
        if (m.steps) {
            any = true;
            sum += *m.steps;
        }
    }
    if (!any) {
        return std::nullopt;
    }
    return sum;
}

std::optional<double> resting_heart_rate(std::span<const MinuteRecord> day, int min_run) {
    std::array<int, kMinutesPerDay> steps;
    std::array<double, kMinutesPerDay> hr;
    std::array<bool, kMinutesPerDay> has_hr{};
    steps.fill(-1);
    for (const auto &m : day) {
        if (m.minute < 0 || m.minute >= kMinutesPerDay) {
            continue;
        }
        if (m.steps) {
            steps[m.minute] = *m.steps;
        }
        if (m.heart_rate) {
            hr[m.minute] = *m.heart_rate;
            has_hr[m.minute] = true;
        }
    }

    double sum = 0.0;
    int count = 0;
    int run_start = 0;
    for (int i = 0; i <= kMinutesPerDay; ++i) {
        if (i < kMinutesPerDay && steps[i] == 0) {
            continue;
        }
        if (i - run_start >= min_run) {
            for (int k = run_start; k < i; ++k) {
                if (has_hr[k]) {
                    sum += hr[k];
                    ++count;
                }
            }
        }
        run_start = i + 1;
    }
    if (count == 0) {
        return std::nullopt;
    }
    return sum / count;
}

namespace {

int allowed_missing_minutes(double max_missing_fraction) {
    return static_cast<int>(std::floor(max_missing_fraction * kMinutesPerDay + 1e-9));
}

} // namespace

bool day_quality(std::span<const MinuteRecord> day, double max_missing_fraction) {
    int steps_present = 0;
    int hr_present = 0;
    int last_minute = -1;
    for (const auto &m : day) {
        if (m.minute == last_minute) {
            continue;
        }
        last_minute = m.minute;
        steps_present += m.steps ? 1 : 0;
        hr_present += m.heart_rate ? 1 : 0;
    }
    const int required = kMinutesPerDay - allowed_missing_minutes(max_missing_fraction);
    return steps_present >= required && hr_present >= required;
}

std::optional<DateInterval> minute_calendar(std::span<const MinuteRecord> minutes) {
    if (minutes.empty()) {
        return std::nullopt;
    }
    auto [lo, hi] = std::minmax_element(
        minutes.begin(), minutes.end(),
        [](const MinuteRecord &a, const MinuteRecord &b) { return a.date < b.date; });
    return DateInterval{lo->date, hi->date};
}

std::vector<DailyFeatures> extract_daily(std::span<const MinuteRecord> minutes,
                                         DateInterval calendar, const FeatureConfig &config) {
    std::vector<DailyFeatures> out;
    if (calendar.end < calendar.start) {
        return out;
    }
    out.reserve(static_cast<std::size_t>(calendar.length_days()));
    std::size_t pos = 0;
    while (pos < minutes.size() && minutes[pos].date < calendar.start) {
        ++pos;
    }
    for (Date d = calendar.start; d <= calendar.end; ++d) {
        const std::size_t begin = pos;
        while (pos < minutes.size() && minutes[pos].date == d) {
            ++pos;
        }
        const auto day = minutes.subspan(begin, pos - begin);
        DailyFeatures f;
        f.date = d;
        f.quality_ok = day_quality(day, config.max_missing_fraction);
        if (f.quality_ok) {
            f.sleep_minutes = sleep_duration(day);
            f.total_steps = total_steps(day);
            f.resting_hr = resting_heart_rate(day, config.resting_run_minutes);
        }
        out.push_back(f);
    }
    return out;
}

std::vector<double> impute_linear(std::span<const std::optional<double>> series) {
    std::vector<double> out(series.size());
    std::ptrdiff_t prev = -1;
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (!series[i]) {
            continue;
        }
        out[i] = *series[i];
        if (prev < 0) {
            for (std::size_t k = 0; k < i; ++k) {
                out[k] = *series[i];
            }
        } else if (static_cast<std::size_t>(prev) + 1 < i) {
            const double a = *series[static_cast<std::size_t>(prev)];
            const double b = *series[i];
            const double gap = static_cast<double>(i) - static_cast<double>(prev);
            for (std::size_t k = static_cast<std::size_t>(prev) + 1; k < i; ++k) {
                const double t = (static_cast<double>(k) - static_cast<double>(prev)) / gap;
                out[k] = a + (b - a) * t;
            }
        }
        prev = static_cast<std::ptrdiff_t>(i);
    }
    if (prev < 0) {
        if (series.empty()) {
            return out;
        }
        throw Error("cannot impute a series with no present values");
    }
    for (std::size_t k = static_cast<std::size_t>(prev) + 1; k < series.size(); ++k) {
        out[k] = *series[static_cast<std::size_t>(prev)];
    }
    return out;
}

NormalizationConstants compute_normalization(std::span<const DailyFeatures> daily) {
    NormalizationConstants c;
    for (auto f : kAllFeatures) {
        double sum = 0.0;
        int n = 0;
        for (const auto &d : daily) {
            if (const auto v = d.get(f); d.quality_ok && v) {
                sum += *v;
                ++n;
            }
        }
        if (n == 0) {
            continue;
        }
        const double mean = sum / n;
        double ss = 0.0;
        for (const auto &d : daily) {
            if (const auto v = d.get(f); d.quality_ok && v) {
                ss += (*v - mean) * (*v - mean);
            }
        }
        c[f] = FeatureMoments{mean, std::sqrt(ss / n)};
    }
    return c;
}

std::vector<double> normalize_series(std::span<const double> series, const FeatureMoments &moments) {
    std::vector<double> out(series.size(), 0.0);
    if (moments.std == 0.0) {
        return out;
    }
    for (std::size_t i = 0; i < series.size(); ++i) {
        out[i] = (series[i] - moments.mean) / moments.std;
    }
    return out;
}

std::optional<ParticipantSeries> prepare_series(std::string_view participant_id,
                                                std::span<const DailyFeatures> daily) {
    if (daily.empty()) {
        return std::nullopt;
    }
    ParticipantSeries s;
    s.participant_id = std::string(participant_id);
    s.first_date = daily.front().date;
    s.values.resize(daily.size());
    s.imputed_mask.assign(daily.size(), 0);
    s.constants = compute_normalization(daily);

    for (auto f : kAllFeatures) {
        const int fi = static_cast<int>(f);
        std::vector<std::optional<double>> column(daily.size());
        bool any = false;
        for (std::size_t i = 0; i < daily.size(); ++i) {
            column[i] = daily[i].get(f);
            if (column[i]) {
                any = true;
            } else {
                s.imputed_mask[i] |= static_cast<std::uint8_t>(1U << fi);
            }
        }
        if (!any) {
            return std::nullopt;
        }
        const auto filled = impute_linear(column);
        const auto normalized = normalize_series(filled, s.constants[f]);
        for (std::size_t i = 0; i < daily.size(); ++i) {
            s.values[i][static_cast<std::size_t>(fi)] = normalized[i];
        }
    }
    return s;
}

std::vector<Window> make_windows(const ParticipantSeries &series,
                                 std::span<const LabeledDay> labels) {
    if (labels.size() != series.days() || (!labels.empty() && labels.front().date != series.first_date)) {
        throw Error(fmt::format("day labels for '{}' do not cover the feature calendar",
                                series.participant_id));
    }
    std::vector<Window> windows;
    if (series.days() < static_cast<std::size_t>(kWindowDays)) {
        return windows;
    }
    windows.reserve(series.days() - kWindowDays + 1);
    for (std::size_t end = kWindowDays - 1; end < series.days(); ++end) {
        Window w;
        w.participant_id = series.participant_id;
        w.end_date = series.first_date + static_cast<int>(end);
        bool all_normal = true;
        bool any_anomalous = false;
        for (int d = 0; d < kWindowDays; ++d) {
            const std::size_t idx = end + 1 - kWindowDays + static_cast<std::size_t>(d);
            for (int f = 0; f < kFeatureCount; ++f) {
                w.values(d, f) = series.values[idx][static_cast<std::size_t>(f)];
                if (series.imputed_mask[idx] & (1U << f)) {
                    ++w.missing_cells;
                }
            }
            const auto &day = labels[idx];
            all_normal = all_normal && day.label == DayLabel::kNormalEligible;
            any_anomalous = any_anomalous || day.label == DayLabel::kAnomalous;
            for (const auto &id : day.episode_ids) {
                if (std::find(w.episode_ids.begin(), w.episode_ids.end(), id) == w.episode_ids.end()) {
                    w.episode_ids.push_back(id);
                }
            }
        }
        w.label = any_anomalous ? DayLabel::kAnomalous
                  : all_normal  ? DayLabel::kNormalEligible
                                : DayLabel::kAmbiguous;
        windows.push_back(std::move(w));
    }
    return windows;
}

bool is_training_window(const Window &window, const FeatureConfig &config) {
    return window.label == DayLabel::kNormalEligible &&
           window.missing_cells < config.max_window_missing_fraction * kWindowCells;
}

} // namespace wearad
