#include "riskcast/time_utils.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace riskcast {

namespace {

constexpr double kSecPerDay = 86400.0;

// Floored division/modulo so negative times wrap correctly.
std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

// Hinnant's civil-from-days / days-from-civil conversions.
void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    std::int64_t era = floor_div(z, 146097);
    unsigned doe = static_cast<unsigned>(z - era * 146097);
    unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y = static_cast<int>(yy + (m <= 2));
}

std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    std::int64_t era = floor_div(y, 400);
    unsigned yoe = static_cast<unsigned>(y - era * 400);
    unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
    unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

}  // namespace

double time_of_day_hours(UnixTime t) {
    double d = std::fmod(t, kSecPerDay);
    if (d < 0) d += kSecPerDay;
    double h = d / 3600.0;
    return h >= 24.0 ? 0.0 : h;
}

double day_of_week_days(UnixTime t) {
    // Epoch day 0 is Thursday; shift by 3 days so 0 = Monday.
    double week = std::fmod(t + 3.0 * kSecPerDay, 7.0 * kSecPerDay);
    if (week < 0) week += 7.0 * kSecPerDay;
    double d = week / kSecPerDay;
    return d >= 7.0 ? 0.0 : d;
}

std::string iso8601_utc(UnixTime t) {
    double whole = std::floor(t);
    int millis = static_cast<int>(std::lround((t - whole) * 1000.0));
    std::int64_t secs = static_cast<std::int64_t>(whole);
    if (millis == 1000) {
        millis = 0;
        secs += 1;
    }
    std::int64_t days = floor_div(secs, 86400);
    std::int64_t rem = secs - days * 86400;
    int y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    int hh = static_cast<int>(rem / 3600);
    int mm = static_cast<int>((rem / 60) % 60);
    int ss = static_cast<int>(rem % 60);
    char buf[40];
    if (millis != 0) {
        std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", y, m, d, hh, mm, ss, millis);
    } else {
        std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02dZ", y, m, d, hh, mm, ss);
    }
    return buf;
}

UnixTime parse_iso8601(const std::string& s) {
    int y, hh, mm;
    unsigned mo, d;
    double ss = 0.0;
    char zone = 0;
    int n = std::sscanf(s.c_str(), "%d-%u-%uT%d:%d:%lf%c", &y, &mo, &d, &hh, &mm, &ss, &zone);
    if (n < 6 || (n == 7 && zone != 'Z')) {
        throw std::invalid_argument("parse_iso8601: bad timestamp '" + s + "'");
    }
    std::int64_t days = days_from_civil(y, mo, d);
    return static_cast<double>(days) * kSecPerDay + hh * 3600.0 + mm * 60.0 + ss;
}

}  // namespace riskcast
