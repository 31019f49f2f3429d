#pragma once

#include <cstdint>
#include <string>

namespace riskcast {

// Absolute UTC time, seconds since the Unix epoch.
using UnixTime = double;

// 1970-01-01 was a Thursday; day-of-week 0 means Monday 00:00 UTC.
double time_of_day_hours(UnixTime t);  // [0, 24)
double day_of_week_days(UnixTime t);   // [0, 7)

// "2015-01-05T08:30:00Z", with ".mmm" appended for sub-second times.
std::string iso8601_utc(UnixTime t);
UnixTime parse_iso8601(const std::string& s);

}  // namespace riskcast
