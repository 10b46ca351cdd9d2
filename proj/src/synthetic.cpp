#include "tscx/synthetic.hpp"

#include <cmath>

#include "tscx/error.hpp"
#include "tscx/rng.hpp"
#include "tscx/timeutil.hpp"

namespace tscx {

TradingCalendar synthetic_calendar(int n_days) {
  if (n_days < 1) fail(Errc::InvalidConfig, "synthetic_calendar: n_days must be >= 1");
  TradingCalendar cal;
  cal.timezone = "UTC";
  int64_t day = days_from_civil({2023, 6, 5});  // a Monday
  while (static_cast<int>(cal.trading_days.size()) < n_days) {
    if (!is_weekend(day)) cal.trading_days.push_back(static_cast<int32_t>(day));
    ++day;
  }
  return cal;
}

AlignedSeries synthetic_asset(const std::string& asset_id, AssetClass cls,
                              const TradingCalendar& cal, double phi, uint64_t seed,
                              double scale) {
  if (phi <= -1.0 || phi >= 1.0) fail(Errc::InvalidConfig, "synthetic_asset: need |phi| < 1");
  Rng rng(seed);
  const double innov = std::sqrt(1.0 - phi * phi);
  const int slots = cal.slots_per_day();

  OhlcvSeries raw;
  raw.asset_id = asset_id;
  raw.asset_class = cls;
  double x = rng.normal();
  float prev_close = static_cast<float>(100.0 * std::exp(scale * x));
  for (int32_t day : cal.trading_days) {
    for (int s = 0; s < slots; ++s) {
      x = phi * x + innov * rng.normal();
      float close = static_cast<float>(100.0 * std::exp(scale * x));
      float open = prev_close;
      float hi = std::max(open, close) * 1.001f;
      float lo = std::min(open, close) * 0.999f;
      raw.ts.push_back(local_to_utc_minutes(cal.timezone, day, cal.session_open + s));
      raw.px.push_back({open, hi, lo, close});
      raw.present.push_back(1);
      prev_close = close;
    }
  }
  return fill_missing(session_filter(raw, cal));
}

std::vector<AlignedSeries> synthetic_corpus(int n_crypto, int n_stock, const TradingCalendar& cal,
                                            double phi_crypto, double phi_stock, uint64_t seed) {
  if (n_crypto < 1 || n_stock < 1)
    fail(Errc::InvalidConfig, "synthetic_corpus: need at least one asset per class");
  Rng master(seed);
  std::vector<AlignedSeries> out;
  out.reserve(n_crypto + n_stock);
  for (int i = 0; i < n_crypto; ++i)
    out.push_back(synthetic_asset("C" + std::to_string(i), AssetClass::Crypto, cal, phi_crypto,
                                  master.next_u64()));
  for (int i = 0; i < n_stock; ++i)
    out.push_back(synthetic_asset("S" + std::to_string(i), AssetClass::Stock, cal, phi_stock,
                                  master.next_u64()));
  return out;
}

std::vector<AlignedSeries> synthetic_exchangeable(int n_assets, AssetClass cls,
                                                  const TradingCalendar& cal, double phi,
                                                  uint64_t seed) {
  if (n_assets < 1) fail(Errc::InvalidConfig, "synthetic_exchangeable: need at least one asset");
  Rng master(seed);
  std::vector<AlignedSeries> out;
  out.reserve(n_assets);
  const char* prefix = cls == AssetClass::Crypto ? "C" : "S";
  for (int i = 0; i < n_assets; ++i)
    out.push_back(
        synthetic_asset(prefix + std::to_string(i), cls, cal, phi, master.next_u64()));
  return out;
}

}  // namespace tscx
