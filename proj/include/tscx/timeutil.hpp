#pragma once

#include <cstdint>
#include <string>

namespace tscx {

/// Calendar date. Plain value type; arithmetic goes through day numbers
/// (days since 1970-01-01).
struct CivilDate {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31

  bool operator==(const CivilDate&) const = default;
};

int64_t days_from_civil(const CivilDate& d);
CivilDate civil_from_days(int64_t z);

/// 0 = Sunday .. 6 = Saturday.
int weekday_from_days(int64_t z);
inline bool is_weekend(int64_t z) {
  int w = weekday_from_days(z);
  return w == 0 || w == 6;
}

/// Parses "YYYY-MM-DD". Throws Error(SyntaxError) on malformed input.
CivilDate parse_date(const std::string& s);
std::string format_date(const CivilDate& d);
std::string format_date(int64_t day_number);

/// Parses an ISO-8601 UTC instant ("2023-06-01T13:30:00Z", seconds and the
/// trailing zone designator optional, 'T' or ' ' separator) into minutes
/// since the epoch. Returns false if the text does not parse.
bool parse_iso_minutes(const std::string& s, int64_t* minutes_out);

std::string format_iso_minutes(int64_t minutes);

/// Offset east of UTC, in minutes, for a local wall-clock instant in `zone`.
/// Supported zones: "America/New_York" (US DST rule), "UTC"/"Etc/UTC", and
/// fixed offsets "UTC+HH:MM"/"UTC-HH:MM". Throws Error(UnknownTimezone)
/// otherwise.
int zone_offset_minutes(const std::string& zone, int64_t local_day, int local_minute_of_day);

/// Converts a local (day, minute-of-day) in `zone` to minutes since epoch UTC.
int64_t local_to_utc_minutes(const std::string& zone, int64_t local_day, int local_minute_of_day);

}  // namespace tscx
