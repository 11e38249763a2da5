#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "cardiolens/errors.hpp"

namespace cardiolens {

// Calendar date, serialized as "YYYY-MM-DD".
struct Date {
    int year = 1970;
    int month = 1;
    int day = 1;

    friend bool operator==(const Date&, const Date&) = default;
};

// Days since 1970-01-01 (proleptic Gregorian). Standard civil-days algorithm.
inline std::int64_t days_from_civil(const Date& d) {
    std::int64_t y = d.year;
    y -= d.month <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy =
        (153u * static_cast<unsigned>(d.month + (d.month > 2 ? -3 : 9)) + 2u) / 5u +
        static_cast<unsigned>(d.day) - 1u;
    const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline Date civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return Date{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

inline Date add_days(const Date& d, std::int64_t n) {
    return civil_from_days(days_from_civil(d) + n);
}

// Signed day difference a - b.
inline std::int64_t day_offset(const Date& a, const Date& b) {
    return days_from_civil(a) - days_from_civil(b);
}

inline bool operator<(const Date& a, const Date& b) {
    return days_from_civil(a) < days_from_civil(b);
}

inline std::string to_string(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
    return std::string(buf);
}

inline Date parse_date(std::string_view s) {
    auto bad = [&] { throw FormatError("bad date: '" + std::string(s) + "'"); };
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') bad();
    auto num = [&](std::size_t off, std::size_t len) {
        int v = 0;
        for (std::size_t i = off; i < off + len; ++i) {
            if (s[i] < '0' || s[i] > '9') bad();
            v = v * 10 + (s[i] - '0');
        }
        return v;
    };
    Date d{num(0, 4), num(5, 2), num(8, 2)};
    if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > 31) bad();
    return d;
}

}  // namespace cardiolens
