#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tscx/error.hpp"
#include "tscx/timeutil.hpp"

using namespace tscx;

TEST_CASE("civil date <-> day number round trip") {
  // 1970-01-01 is day 0, a Thursday (weekday 4 with Sunday = 0).
  CHECK(days_from_civil({1970, 1, 1}) == 0);
  CHECK(weekday_from_days(0) == 4);

  // sweep 1960..2040: day numbers advance by one and invert exactly
  int64_t d0 = days_from_civil({1960, 1, 1});
  int64_t d1 = days_from_civil({2040, 12, 31});
  int64_t prev = d0 - 1;
  for (int64_t z = d0; z <= d1; ++z) {
    CivilDate c = civil_from_days(z);
    CHECK(days_from_civil(c) == z);
    CHECK(z == prev + 1);
    prev = z;
  }
}

TEST_CASE("known calendar anchors") {
  CHECK(days_from_civil({2023, 6, 1}) == 19509);
  CHECK(weekday_from_days(days_from_civil({2023, 6, 1})) == 4);   // Thursday
  CHECK(weekday_from_days(days_from_civil({2024, 3, 10})) == 0);  // Sunday
  CHECK(format_date(CivilDate{2024, 2, 29}) == "2024-02-29");
  CHECK(parse_date("2024-02-29") == CivilDate{2024, 2, 29});
}

TEST_CASE("parse_date rejects malformed input") {
  for (const char* bad : {"2023-13-01", "2023-02-30", "2023/06/01", "23-06-01", "2023-06-1",
                          "2023-06-011", ""}) {
    CHECK_THROWS_AS(parse_date(bad), Error);
  }
  try {
    parse_date("2023-02-30");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SyntaxError);
  }
}

TEST_CASE("ISO-8601 minute parsing") {
  int64_t m = 0;
  REQUIRE(parse_iso_minutes("2023-06-01T13:30:00Z", &m));
  CHECK(m == 19509 * 1440 + 13 * 60 + 30);

  int64_t m2 = 0;
  CHECK(parse_iso_minutes("2023-06-01T13:30", &m2));
  CHECK(m2 == m);
  CHECK(parse_iso_minutes("2023-06-01 13:30:00", &m2));
  CHECK(m2 == m);
  CHECK(parse_iso_minutes("2023-06-01T13:30:00+00:00", &m2));
  CHECK(m2 == m);

  CHECK(format_iso_minutes(m) == "2023-06-01T13:30:00Z");

  for (const char* bad : {"2023-06-01", "2023-06-01T24:00", "2023-06-01T13:60",
                          "2023-06-01T13:30:30", "2023-06-01T13:30:00+02:00", "junk"}) {
    CHECK_FALSE(parse_iso_minutes(bad, &m2));
  }
}

TEST_CASE("New York zone offsets across DST transitions") {
  auto off = [](int y, int mo, int d, int minute) {
    return zone_offset_minutes("America/New_York", days_from_civil({y, mo, d}), minute);
  };
  CHECK(off(2024, 1, 15, 570) == -300);  // winter: EST
  CHECK(off(2023, 7, 15, 570) == -240);  // summer: EDT

  // spring forward: second Sunday of March 2024 is the 10th, 02:00 local
  CHECK(off(2024, 3, 10, 119) == -300);
  CHECK(off(2024, 3, 10, 120) == -240);
  CHECK(off(2024, 3, 9, 570) == -300);
  CHECK(off(2024, 3, 11, 570) == -240);

  // fall back: first Sunday of November 2023 is the 5th
  CHECK(off(2023, 11, 5, 119) == -240);
  CHECK(off(2023, 11, 5, 120) == -300);
  CHECK(off(2023, 11, 4, 570) == -240);
  CHECK(off(2023, 11, 6, 570) == -300);
}

TEST_CASE("local-to-UTC conversion for the equity session") {
  // 09:30 New York = 13:30 UTC in summer, 14:30 UTC in winter
  int64_t summer = local_to_utc_minutes("America/New_York", days_from_civil({2023, 6, 1}), 570);
  CHECK(format_iso_minutes(summer) == "2023-06-01T13:30:00Z");
  int64_t winter = local_to_utc_minutes("America/New_York", days_from_civil({2024, 1, 15}), 570);
  CHECK(format_iso_minutes(winter) == "2024-01-15T14:30:00Z");
}

TEST_CASE("other zones") {
  CHECK(zone_offset_minutes("UTC", 19509, 0) == 0);
  CHECK(zone_offset_minutes("Etc/UTC", 19509, 700) == 0);
  CHECK(zone_offset_minutes("UTC+05:30", 19509, 0) == 330);
  CHECK(zone_offset_minutes("UTC-04:00", 19509, 0) == -240);
  CHECK_THROWS_AS(zone_offset_minutes("Mars/Olympus", 19509, 0), Error);
  try {
    zone_offset_minutes("Mars/Olympus", 19509, 0);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnknownTimezone);
  }
}
