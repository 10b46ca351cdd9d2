#pragma once

#include <cstdint>
#include <string>

#include "tscx/ingest.hpp"

namespace tscx {

struct FetchOptions {
  int max_retries = 3;    // extra attempts after the first
  int backoff_ms = 200;   // doubles per retry
  int page_limit = 1000;  // public endpoint maximum
};

struct FetchReport {
  int requests = 0;
  int retries = 0;
};

/// Pulls minute klines from `endpoint` (e.g. "http://host:port/api/v3/klines")
/// page by page. Transient failures (connect errors, 5xx) and 429s retry
/// with exponential backoff; a 429 that survives the retry budget surfaces
/// as RateLimited carrying the server's Retry-After.
OhlcvSeries fetch_klines(const std::string& endpoint, const std::string& symbol,
                         const std::string& interval, int64_t start_ms, int64_t end_ms,
                         AssetClass cls = AssetClass::Crypto, const FetchOptions& opt = {},
                         FetchReport* report = nullptr);

}  // namespace tscx
