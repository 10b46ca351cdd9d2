#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace tscx {

enum class AssetClass { Crypto, Stock };

std::string to_string(AssetClass c);
AssetClass asset_class_from(const std::string& s);

/// Minute bars, sorted by timestamp (minutes since epoch, UTC). A bar can
/// be present in time but missing its prices.
struct OhlcvSeries {
  std::string asset_id;
  AssetClass asset_class = AssetClass::Stock;
  std::vector<int64_t> ts;
  std::vector<std::array<float, 4>> px;  // open, high, low, close
  std::vector<uint8_t> present;
  // Set by session_filter: the local trading date (days since epoch) of each
  // materialized 391-slot block. Empty on raw series.
  std::vector<int32_t> session_days;

  size_t size() const { return ts.size(); }
};

struct TradingCalendar {
  std::vector<int32_t> trading_days;  // days since epoch, ascending
  int session_open = 570;             // minutes of local day, inclusive
  int session_close = 960;            // inclusive; 570..960 = 391 slots
  std::string timezone = "America/New_York";

  int slots_per_day() const { return session_close - session_open + 1; }
};

/// Dense session-aligned matrix: 391 rows per trading day, 4 channels.
struct AlignedSeries {
  std::string asset_id;
  AssetClass asset_class = AssetClass::Stock;
  std::vector<float> values;      // row-major [rows][4]
  std::vector<int> day_index;     // per row
  std::vector<int64_t> ts;        // per row, UTC minutes
  std::vector<int32_t> day_dates; // per trading day, days since epoch
  int days = 0;

  size_t rows() const { return day_index.size(); }
};

/// CSV with header `timestamp,open,high,low,close`. Rows with unparseable
/// or non-positive prices become missing bars at their timestamp.
OhlcvSeries load_csv(const std::string& path, const std::string& asset_id, AssetClass cls);

/// Calendar file: `timezone <zone>` header, optional `session <open> <close>`,
/// then one ISO date per line.
TradingCalendar load_calendar(const std::string& path);
void save_calendar(const TradingCalendar& cal, const std::string& path);

/// The bundled NYSE calendar, 2023-06-01 through 2024-05-31: 252 days.
TradingCalendar nyse_calendar_2023_2024();

/// Keeps bars falling inside the exchange session on trading days and
/// materializes all 391 slots for every trading day the input range
/// touches; slots without an input bar stay missing.
OhlcvSeries session_filter(const OhlcvSeries& series, const TradingCalendar& cal);

/// Forward-fills within each day, backfills a day's leading gap from the
/// first present bar of that same day; never crosses day boundaries.
AlignedSeries fill_missing(const OhlcvSeries& filtered);

}  // namespace tscx
