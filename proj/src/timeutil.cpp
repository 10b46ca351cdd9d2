#include "tscx/timeutil.hpp"

#include <cstdio>
#include <cstring>

#include "tscx/error.hpp"

namespace tscx {

// Howard Hinnant's algorithms, http://howardhinnant.github.io/date_algorithms.html
int64_t days_from_civil(const CivilDate& d) {
  int y = d.year;
  const unsigned m = static_cast<unsigned>(d.month);
  const unsigned dd = static_cast<unsigned>(d.day);
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);               // [0, 399]
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + dd - 1;    // [0, 365]
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;              // [0, 146096]
  return static_cast<int64_t>(era) * 146097 + static_cast<int64_t>(doe) - 719468;
}

CivilDate civil_from_days(int64_t z) {
  z += 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);            // [0, 146096]
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int64_t y = static_cast<int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);            // [0, 365]
  const unsigned mp = (5 * doy + 2) / 153;                                 // [0, 11]
  const unsigned dd = doy - (153 * mp + 2) / 5 + 1;                        // [1, 31]
  const unsigned m = mp + (mp < 10 ? 3 : -9);                              // [1, 12]
  return CivilDate{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(dd)};
}

int weekday_from_days(int64_t z) {
  return static_cast<int>(z >= -4 ? (z + 4) % 7 : (z + 5) % 7 + 6);
}

namespace {

bool scan_uint(const char*& p, const char* end, int width, int* out) {
  int v = 0;
  for (int i = 0; i < width; ++i) {
    if (p == end || *p < '0' || *p > '9') return false;
    v = v * 10 + (*p - '0');
    ++p;
  }
  *out = v;
  return true;
}

bool days_in_month_ok(int y, int m, int d) {
  static const int mdays[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m < 1 || m > 12 || d < 1) return false;
  int lim = mdays[m - 1];
  bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  if (m == 2 && leap) lim = 29;
  return d <= lim;
}

bool parse_date_at(const char*& p, const char* end, CivilDate* out) {
  int y, m, d;
  if (!scan_uint(p, end, 4, &y)) return false;
  if (p == end || *p != '-') return false;
  ++p;
  if (!scan_uint(p, end, 2, &m)) return false;
  if (p == end || *p != '-') return false;
  ++p;
  if (!scan_uint(p, end, 2, &d)) return false;
  if (!days_in_month_ok(y, m, d)) return false;
  *out = CivilDate{y, m, d};
  return true;
}

}  // namespace

CivilDate parse_date(const std::string& s) {
  const char* p = s.data();
  const char* end = p + s.size();
  CivilDate d;
  if (!parse_date_at(p, end, &d) || p != end)
    fail(Errc::SyntaxError, "bad date: '" + s + "' (want YYYY-MM-DD)");
  return d;
}

std::string format_date(const CivilDate& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month, d.day);
  return buf;
}

std::string format_date(int64_t day_number) { return format_date(civil_from_days(day_number)); }

bool parse_iso_minutes(const std::string& s, int64_t* minutes_out) {
  const char* p = s.data();
  const char* end = p + s.size();
  CivilDate d;
  if (!parse_date_at(p, end, &d)) return false;
  if (p == end || (*p != 'T' && *p != ' ')) return false;
  ++p;
  int hh, mm;
  if (!scan_uint(p, end, 2, &hh)) return false;
  if (p == end || *p != ':') return false;
  ++p;
  if (!scan_uint(p, end, 2, &mm)) return false;
  if (hh > 23 || mm > 59) return false;
  if (p != end && *p == ':') {  // optional seconds, must be :00 for minute data
    ++p;
    int ss;
    if (!scan_uint(p, end, 2, &ss)) return false;
    if (ss != 0) return false;
  }
  if (p != end) {  // optional zone designator, UTC only
    if (*p == 'Z') {
      ++p;
    } else if (end - p == 6 && (*p == '+' || *p == '-')) {
      if (std::memcmp(p + 1, "00:00", 5) != 0) return false;
      p = end;
    } else {
      return false;
    }
  }
  if (p != end) return false;
  *minutes_out = days_from_civil(d) * 1440 + hh * 60 + mm;
  return true;
}

std::string format_iso_minutes(int64_t minutes) {
  int64_t day = minutes >= 0 ? minutes / 1440 : (minutes - 1439) / 1440;
  int mod = static_cast<int>(minutes - day * 1440);
  CivilDate d = civil_from_days(day);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:00Z", d.year, d.month, d.day, mod / 60,
                mod % 60);
  return buf;
}

namespace {

// Day number of the n-th (1-based) `weekday` (0=Sun) of year/month.
int64_t nth_weekday_of_month(int year, int month, int weekday, int n) {
  int64_t first = days_from_civil(CivilDate{year, month, 1});
  int w = weekday_from_days(first);
  int delta = (weekday - w + 7) % 7;
  return first + delta + static_cast<int64_t>(n - 1) * 7;
}

// US rule since 2007: DST from the second Sunday of March 02:00 local to the
// first Sunday of November 02:00 local.
bool new_york_is_dst(int64_t local_day, int local_minute_of_day) {
  CivilDate d = civil_from_days(local_day);
  int64_t start = nth_weekday_of_month(d.year, 3, 0, 2);
  int64_t stop = nth_weekday_of_month(d.year, 11, 0, 1);
  if (local_day < start || local_day > stop) return false;
  if (local_day > start && local_day < stop) return true;
  if (local_day == start) return local_minute_of_day >= 120;
  return local_minute_of_day < 120;  // local_day == stop
}

bool parse_fixed_offset(const std::string& zone, int* out) {
  // "UTC+HH:MM" / "UTC-HH:MM"
  if (zone.size() != 9 || zone.compare(0, 3, "UTC") != 0) return false;
  char sign = zone[3];
  if (sign != '+' && sign != '-') return false;
  const char* p = zone.data() + 4;
  const char* end = zone.data() + zone.size();
  int hh, mm;
  if (!scan_uint(p, end, 2, &hh)) return false;
  if (*p != ':') return false;
  ++p;
  if (!scan_uint(p, end, 2, &mm)) return false;
  if (hh > 14 || mm > 59) return false;
  int v = hh * 60 + mm;
  *out = sign == '-' ? -v : v;
  return true;
}

}  // namespace

int zone_offset_minutes(const std::string& zone, int64_t local_day, int local_minute_of_day) {
  if (zone == "UTC" || zone == "Etc/UTC") return 0;
  if (zone == "America/New_York")
    return new_york_is_dst(local_day, local_minute_of_day) ? -240 : -300;
  int fixed;
  if (parse_fixed_offset(zone, &fixed)) return fixed;
  fail(Errc::UnknownTimezone, "unknown timezone '" + zone + "'");
}

int64_t local_to_utc_minutes(const std::string& zone, int64_t local_day, int local_minute_of_day) {
  int off = zone_offset_minutes(zone, local_day, local_minute_of_day);
  return local_day * 1440 + local_minute_of_day - off;
}

}  // namespace tscx
