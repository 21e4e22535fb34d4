#ifndef CCMATCH_DATE_HPP
#define CCMATCH_DATE_HPP

#include <cctype>
#include <compare>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace ccmatch {

/// Proleptic Gregorian calendar date at day resolution.
struct Date {
    int year = 1970;
    int month = 1;
    int day = 1;

    static bool is_leap(int y) {
        return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    }

    static int days_in_month(int y, int m) {
        static constexpr int lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
        if (m == 2 && is_leap(y)) return 29;
        return lengths[m - 1];
    }

    bool valid() const {
        return month >= 1 && month <= 12 && day >= 1 && day <= days_in_month(year, month);
    }

    /// Strict ISO-8601 `YYYY-MM-DD`; rejects malformed text and impossible dates.
    static std::optional<Date> parse(std::string_view s) {
        if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
        for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
            if (!std::isdigit(static_cast<unsigned char>(s[i]))) return std::nullopt;
        auto num = [&](std::size_t pos, std::size_t len) {
            int v = 0;
            for (std::size_t i = pos; i < pos + len; ++i) v = v * 10 + (s[i] - '0');
            return v;
        };
        Date d{num(0, 4), num(5, 2), num(8, 2)};
        if (!d.valid()) return std::nullopt;
        return d;
    }

    /// Days since 1970-01-01 (negative before). Low-level civil-calendar arithmetic.
    long serial() const {
        long y = year - (month <= 2);
        const long era = (y >= 0 ? y : y - 399) / 400;
        const unsigned yoe = static_cast<unsigned>(y - era * 400);
        const unsigned doy = (153u * static_cast<unsigned>(month + (month > 2 ? -3 : 9)) + 2u) / 5u +
                             static_cast<unsigned>(day) - 1u;
        const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
        return era * 146097L + static_cast<long>(doe) - 719468L;
    }

    static Date from_serial(long days) {
        days += 719468L;
        const long era = (days >= 0 ? days : days - 146096L) / 146097L;
        const unsigned doe = static_cast<unsigned>(days - era * 146097L);
        const unsigned yoe = (doe - doe / 1460u + doe / 36524u - doe / 146096u) / 365u;
        const long y = static_cast<long>(yoe) + era * 400L;
        const unsigned doy = doe - (365u * yoe + yoe / 4u - yoe / 100u);
        const unsigned mp = (5u * doy + 2u) / 153u;
        const unsigned d = doy - (153u * mp + 2u) / 5u + 1u;
        const unsigned m = mp < 10u ? mp + 3u : mp - 9u;
        return Date{static_cast<int>(y + (m <= 2u)), static_cast<int>(m), static_cast<int>(d)};
    }

    std::string to_string() const {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
        return buf;
    }

    auto operator<=>(const Date&) const = default;
};

inline long days_between(Date from, Date to) { return to.serial() - from.serial(); }

inline Date add_days(Date d, long n) { return Date::from_serial(d.serial() + n); }

}  // namespace ccmatch

#endif
