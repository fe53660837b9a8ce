#pragma once

#include "wearad/date.hpp"

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace wearad {

enum class SleepStage : unsigned char { kNone, kAwake, kLight, kDeep, kRem };

std::string_view to_string(SleepStage stage);
std::optional<SleepStage> sleep_stage_from_string(std::string_view text);

inline constexpr int kMinutesPerDay = 1440;
inline constexpr double kMinHeartRate = 20.0;
inline constexpr double kMaxHeartRate = 250.0;
inline constexpr int kMaxPhq8 = 24;
inline constexpr int kMaxGad7 = 21;

struct MinuteRecord {
    Date date;
    int minute = 0; // minute of day, [0, 1439]
    std::optional<double> heart_rate;
    std::optional<int> steps;
    SleepStage sleep_stage = SleepStage::kNone;

    bool operator==(const MinuteRecord &) const = default;
};

struct Assessment {
    Date date;
    int phq8 = 0;
    int gad7 = 0;

    bool operator==(const Assessment &) const = default;
};

struct CovidEvent {
    Date report_date;

    bool operator==(const CovidEvent &) const = default;
};

struct Participant {
    std::string id;
    std::vector<MinuteRecord> minutes;  // sorted by (date, minute)
    std::vector<Assessment> assessments; // strictly increasing dates
    std::vector<CovidEvent> covid_events;

    bool operator==(const Participant &) const = default;
};

/// A loaded cohort. Immutable after parsing; safe to share across threads.
struct Cohort {
    std::vector<Participant> participants;
    std::map<std::string, std::string> metadata;

    [[nodiscard]] const Participant *find(std::string_view id) const;
};

struct ParseOptions {
    /// Heart-rate plausibility violations become errors instead of warnings.
    bool strict = false;
};

struct ParseResult {
    Cohort cohort;
    std::vector<std::string> warnings;
};

/// Reads the JSONL cohort format. Throws ParseError on malformed records,
/// out-of-range scores, duplicate participant declarations, duplicate
/// (date, minute) records, or duplicate assessment dates.
ParseResult parse_cohort(std::istream &in, const ParseOptions &options = {});

/// Writes the JSONL cohort format: for each participant a participant_meta
/// line, then assessments, covid events, and minute records in time order.
void write_cohort(std::ostream &out, const Cohort &cohort);

struct Violation {
    std::string participant_id;
    std::string location;
    std::string message;
};

struct ValidationReport {
    std::size_t participants = 0;
    std::size_t assessments = 0;
    std::size_t minute_records = 0;
    std::size_t covid_events = 0;
    std::vector<Violation> violations;

    [[nodiscard]] bool ok() const noexcept { return violations.empty(); }
};

/// Checks every domain invariant without modifying the cohort.
ValidationReport validate_cohort(const Cohort &cohort);

} // namespace wearad
