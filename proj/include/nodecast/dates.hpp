#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "nodecast/errors.hpp"

namespace nodecast {

// Civil-date arithmetic on a serial day number (days since 1970-01-01).
// Standard Gregorian algorithms; valid far beyond any trading range we use.

inline int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

inline void civil_from_days(int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int yy = static_cast<int>(yoe) + static_cast<int>(era) * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = yy + (m <= 2);
}

// 0 = Monday ... 6 = Sunday.
inline int weekday(int64_t serial) {
    return static_cast<int>(((serial % 7) + 7 + 3) % 7);
}

inline bool is_weekend(int64_t serial) { return weekday(serial) >= 5; }

inline std::string iso_date(int64_t serial) {
    int y, m, d;
    civil_from_days(serial, y, m, d);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
    return buf;
}

inline int64_t parse_iso_date(const std::string& s) {
    int y, m, d;
    if (std::sscanf(s.c_str(), "%d-%d-%d", &y, &m, &d) != 3 || m < 1 || m > 12 || d < 1 || d > 31)
        throw DataError("bad ISO date: '" + s + "'");
    return days_from_civil(y, m, d);
}

// n consecutive weekdays starting at the first weekday >= start.
inline std::vector<int64_t> trading_calendar(int64_t start, int n) {
    std::vector<int64_t> out;
    out.reserve(n);
    int64_t d = start;
    while (static_cast<int>(out.size()) < n) {
        if (!is_weekend(d)) out.push_back(d);
        ++d;
    }
    return out;
}

}  // namespace nodecast
