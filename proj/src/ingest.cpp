#include "tscx/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tscx/error.hpp"
#include "tscx/timeutil.hpp"

namespace tscx {

std::string to_string(AssetClass c) { return c == AssetClass::Crypto ? "crypto" : "stock"; }

AssetClass asset_class_from(const std::string& s) {
  if (s == "crypto") return AssetClass::Crypto;
  if (s == "stock") return AssetClass::Stock;
  fail(Errc::InvalidConfig, "unknown asset class '" + s + "'");
}

namespace {

std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_price(const std::string& field, float* out) {
  std::string f = strip(field);
  if (f.empty()) return false;
  char* end = nullptr;
  float v = std::strtof(f.c_str(), &end);
  if (end != f.c_str() + f.size()) return false;
  if (!std::isfinite(v)) return false;
  *out = v;
  return true;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

OhlcvSeries load_csv(const std::string& path, const std::string& asset_id, AssetClass cls) {
  std::ifstream f(path);
  if (!f) fail(Errc::IoError, "cannot read " + path);

  std::string line;
  if (!std::getline(f, line)) fail(Errc::EmptyFile, path + " has no header");
  if (strip(line) != "timestamp,open,high,low,close")
    fail(Errc::MalformedHeader, path + ": header must be timestamp,open,high,low,close");

  struct Row {
    int64_t ts;
    std::array<float, 4> px;
    bool present;
  };
  std::vector<Row> rows;
  size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (strip(line).empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != 5)
      fail(Errc::UnparseableTimestamp,
           path + " row " + std::to_string(lineno) + ": expected 5 fields");
    int64_t ts;
    if (!parse_iso_minutes(strip(fields[0]), &ts))
      fail(Errc::UnparseableTimestamp,
           path + " row " + std::to_string(lineno) + ": bad timestamp '" + fields[0] + "'");
    Row r{ts, {0, 0, 0, 0}, true};
    for (int i = 0; i < 4; ++i)
      if (!parse_price(fields[i + 1], &r.px[i]) || r.px[i] <= 0.0f) r.present = false;
    if (r.present &&
        (r.px[2] > std::min(r.px[0], r.px[3]) || r.px[1] < std::max(r.px[0], r.px[3])))
      r.present = false;  // low/high bracket violated: treat as unusable
    rows.push_back(r);
  }
  if (rows.empty()) fail(Errc::EmptyFile, path + " has no data rows");

  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.ts < b.ts; });
  for (size_t i = 1; i < rows.size(); ++i)
    if (rows[i].ts == rows[i - 1].ts)
      fail(Errc::DuplicateTimestamp,
           path + ": duplicate timestamp " + format_iso_minutes(rows[i].ts));

  OhlcvSeries out;
  out.asset_id = asset_id;
  out.asset_class = cls;
  out.ts.reserve(rows.size());
  out.px.reserve(rows.size());
  out.present.reserve(rows.size());
  for (const auto& r : rows) {
    out.ts.push_back(r.ts);
    out.px.push_back(r.px);
    out.present.push_back(r.present ? 1 : 0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// calendars
// ---------------------------------------------------------------------------

TradingCalendar load_calendar(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(Errc::IoError, "cannot read " + path);
  TradingCalendar cal;
  cal.timezone.clear();
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::string s = strip(line);
    if (s.empty() || s[0] == '#') continue;
    std::istringstream is(s);
    std::string head;
    is >> head;
    if (head == "timezone") {
      is >> cal.timezone;
      if (cal.timezone.empty())
        fail(Errc::InvalidConfig, path + ": timezone header names no zone");
      continue;
    }
    if (head == "session") {
      if (!(is >> cal.session_open >> cal.session_close) ||
          cal.session_open < 0 || cal.session_close >= 1440 ||
          cal.session_open > cal.session_close)
        fail(Errc::InvalidConfig, path + ": bad session line");
      continue;
    }
    CivilDate d = parse_date(s);
    int32_t day = days_from_civil(d);
    if (is_weekend(day))
      fail(Errc::InvalidConfig, path + " line " + std::to_string(lineno) + ": " + s +
                                    " falls on a weekend");
    if (!cal.trading_days.empty() && day <= cal.trading_days.back())
      fail(Errc::InvalidConfig, path + " line " + std::to_string(lineno) + ": dates not ascending");
    cal.trading_days.push_back(day);
  }
  if (cal.timezone.empty()) fail(Errc::InvalidConfig, path + ": missing timezone header");
  if (cal.trading_days.empty()) fail(Errc::InvalidConfig, path + ": no trading days");
  return cal;
}

void save_calendar(const TradingCalendar& cal, const std::string& path) {
  std::ofstream f(path);
  if (!f) fail(Errc::IoError, "cannot write " + path);
  f << "timezone " << cal.timezone << "\n";
  f << "session " << cal.session_open << " " << cal.session_close << "\n";
  for (int32_t d : cal.trading_days) f << format_date(d) << "\n";
  if (!f) fail(Errc::IoError, "short write to " + path);
}

TradingCalendar nyse_calendar_2023_2024() {
  // Full NYSE closures between 2023-06-01 and 2024-05-31.
  static const CivilDate holidays[] = {
      {2023, 6, 19}, {2023, 7, 4},  {2023, 9, 4},  {2023, 11, 23}, {2023, 12, 25},
      {2024, 1, 1},  {2024, 1, 15}, {2024, 2, 19}, {2024, 3, 29},  {2024, 5, 27},
  };
  std::vector<int32_t> hol;
  for (const auto& h : holidays) hol.push_back(days_from_civil(h));

  TradingCalendar cal;
  cal.timezone = "America/New_York";
  int32_t d = days_from_civil({2023, 6, 1});
  int32_t end = days_from_civil({2024, 5, 31});
  for (; d <= end; ++d) {
    if (is_weekend(d)) continue;
    if (std::find(hol.begin(), hol.end(), d) != hol.end()) continue;
    cal.trading_days.push_back(d);
  }
  return cal;
}

// ---------------------------------------------------------------------------
// session alignment
// ---------------------------------------------------------------------------

OhlcvSeries session_filter(const OhlcvSeries& series, const TradingCalendar& cal) {
  if (cal.trading_days.empty()) fail(Errc::InvalidConfig, "session_filter: empty calendar");
  OhlcvSeries out;
  out.asset_id = series.asset_id;
  out.asset_class = series.asset_class;
  if (series.ts.empty()) return out;

  const int64_t first = series.ts.front(), last = series.ts.back();
  size_t cursor = 0;
  for (int32_t day : cal.trading_days) {
    int64_t open_utc = local_to_utc_minutes(cal.timezone, day, cal.session_open);
    int64_t close_utc = local_to_utc_minutes(cal.timezone, day, cal.session_close);
    if (close_utc < first || open_utc > last) continue;
    out.session_days.push_back(day);
    for (int m = cal.session_open; m <= cal.session_close; ++m) {
      int64_t slot = local_to_utc_minutes(cal.timezone, day, m);
      while (cursor < series.ts.size() && series.ts[cursor] < slot) ++cursor;
      out.ts.push_back(slot);
      if (cursor < series.ts.size() && series.ts[cursor] == slot && series.present[cursor]) {
        out.px.push_back(series.px[cursor]);
        out.present.push_back(1);
      } else {
        out.px.push_back({0, 0, 0, 0});
        out.present.push_back(0);
      }
    }
  }
  return out;
}

AlignedSeries fill_missing(const OhlcvSeries& filtered) {
  const int kSlots = 391;
  if (filtered.ts.empty()) fail(Errc::EmptyDay, "fill_missing: no session slots at all");
  if (filtered.ts.size() % kSlots != 0)
    fail(Errc::MisalignedSeries, "fill_missing: input is not on the 391-slot daily grid (" +
                                     std::to_string(filtered.ts.size()) + " rows)");
  AlignedSeries out;
  out.asset_id = filtered.asset_id;
  out.asset_class = filtered.asset_class;
  out.days = static_cast<int>(filtered.ts.size()) / kSlots;
  out.values.resize(filtered.ts.size() * 4);
  out.day_index.resize(filtered.ts.size());
  out.ts = filtered.ts;
  if (filtered.session_days.size() == static_cast<size_t>(out.days)) {
    out.day_dates = filtered.session_days;
  } else {
    // Hand-built grids lack the annotation; the UTC date of the mid-session
    // slot matches the local trading date for every zone within ~UTC±11.
    for (int d = 0; d < out.days; ++d) {
      int64_t mid = filtered.ts[static_cast<size_t>(d) * kSlots + kSlots / 2];
      out.day_dates.push_back(static_cast<int32_t>(mid >= 0 ? mid / 1440 : (mid - 1439) / 1440));
    }
  }

  for (int d = 0; d < out.days; ++d) {
    const size_t base = static_cast<size_t>(d) * kSlots;
    int first_present = -1;
    for (int i = 0; i < kSlots; ++i)
      if (filtered.present[base + i]) {
        first_present = i;
        break;
      }
    if (first_present < 0)
      fail(Errc::EmptyDay, "fill_missing: " + filtered.asset_id + " day " + std::to_string(d) +
                               " (" + format_iso_minutes(filtered.ts[base]) + ") has no bars");
    std::array<float, 4> hold = filtered.px[base + first_present];
    for (int i = 0; i < kSlots; ++i) {
      if (filtered.present[base + i]) hold = filtered.px[base + i];
      for (int c = 0; c < 4; ++c) out.values[(base + i) * 4 + c] = hold[c];
      out.day_index[base + i] = d;
    }
  }
  return out;
}

}  // namespace tscx
