#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tscx/ingest.hpp"

namespace tscx {

/// Calendar of `n_days` consecutive weekdays starting Monday 2023-06-05,
/// UTC session clock, standard 570..960 session. No holidays, so every
/// full calendar week in range is a 5-day week.
TradingCalendar synthetic_calendar(int n_days);

/// One synthetic asset, session-aligned via the real filter + fill path.
/// Prices follow 100*exp(s*x) where x is a unit-variance AR(1) chain over
/// session minutes: x_t = phi*x_{t-1} + sqrt(1-phi^2)*eps. The marginal
/// stays N(0,1) for any phi, so two phi values differ in smoothness (local
/// peak density, autocorrelation) but not in level or spread.
AlignedSeries synthetic_asset(const std::string& asset_id, AssetClass cls,
                              const TradingCalendar& cal, double phi, uint64_t seed,
                              double scale = 0.05);

/// Two-class corpus: assets C0..C{n-1} with phi_crypto, S0..S{m-1} with
/// phi_stock. Per-asset seeds derive from `seed`.
std::vector<AlignedSeries> synthetic_corpus(int n_crypto, int n_stock,
                                            const TradingCalendar& cal, double phi_crypto,
                                            double phi_stock, uint64_t seed);

/// Single-class corpus where every asset is an independent draw of the same
/// process (exchangeable); the random-label control experiments run on this.
std::vector<AlignedSeries> synthetic_exchangeable(int n_assets, AssetClass cls,
                                                  const TradingCalendar& cal, double phi,
                                                  uint64_t seed);

}  // namespace tscx
