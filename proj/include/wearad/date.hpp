#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace wearad {

/// Calendar date stored as days since 1970-01-01 (proleptic Gregorian).
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::int32_t days_since_epoch) : days_{days_since_epoch} {}

    static Date from_ymd(int year, unsigned month, unsigned day);

    /// Parses "YYYY-MM-DD". Throws wearad::Error on malformed or invalid dates.
    static Date parse(std::string_view iso);

    [[nodiscard]] std::string iso() const;
    [[nodiscard]] constexpr std::int32_t days() const noexcept { return days_; }

    /// 0 = Monday ... 6 = Sunday.
    [[nodiscard]] int weekday() const noexcept;

    constexpr Date operator+(int n) const noexcept { return Date{days_ + n}; }
    constexpr Date operator-(int n) const noexcept { return Date{days_ - n}; }
    constexpr int operator-(Date other) const noexcept { return days_ - other.days_; }
    constexpr Date &operator++() noexcept {
        ++days_;
        return *this;
    }

    constexpr auto operator<=>(const Date &) const = default;

private:
    std::int32_t days_ = 0;
};

/// Closed calendar interval [start, end].
struct DateInterval {
    Date start;
    Date end;

    [[nodiscard]] constexpr bool contains(Date d) const noexcept { return start <= d && d <= end; }
    [[nodiscard]] constexpr bool intersects(const DateInterval &o) const noexcept {
        return start <= o.end && o.start <= end;
    }
    [[nodiscard]] constexpr int length_days() const noexcept { return end - start + 1; }

    constexpr bool operator==(const DateInterval &) const = default;
};

} // namespace wearad
