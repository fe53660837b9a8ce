#include "wearad/date.hpp"

#include "wearad/error.hpp"

#include <charconv>
#include <chrono>

#include <fmt/format.h>

namespace wearad {

namespace {

template <typename T> bool parse_field(std::string_view text, T &out) {
    if (text.empty()) {
        return false;
    }
    for (char c : text) {
        if (c < '0' || c > '9') {
            return false;
        }
    }
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size();
}

} // namespace

Date Date::from_ymd(int year, unsigned month, unsigned day) {
    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                             std::chrono::day{day}};
    if (!ymd.ok()) {
        throw Error(fmt::format("invalid calendar date {:04d}-{:02d}-{:02d}", year, month, day));
    }
    return Date{static_cast<std::int32_t>(sys_days{ymd}.time_since_epoch().count())};
}

Date Date::parse(std::string_view iso) {
    int year = 0;
    unsigned month = 0;
    unsigned day = 0;
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-' || !parse_field(iso.substr(0, 4), year) ||
        !parse_field(iso.substr(5, 2), month) || !parse_field(iso.substr(8, 2), day)) {
        throw Error(fmt::format("malformed ISO-8601 date '{}'", iso));
    }
    return from_ymd(year, month, day);
}

std::string Date::iso() const {
    using namespace std::chrono;
    const year_month_day ymd{sys_days{std::chrono::days{days_}}};
    return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                       static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

int Date::weekday() const noexcept {
    // 1970-01-01 was a Thursday.
    const int r = (days_ + 3) % 7;
    return r < 0 ? r + 7 : r;
}

} // namespace wearad
