#include "tscx/klines.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "tscx/error.hpp"

namespace tscx {

namespace {

struct Url {
  std::string host_port;  // "host:port"
  std::string path;
};

Url split_url(const std::string& endpoint) {
  const std::string scheme = "http://";
  if (endpoint.rfind(scheme, 0) != 0)
    fail(Errc::InvalidConfig, "fetch_klines: endpoint must start with http://");
  std::string rest = endpoint.substr(scheme.size());
  auto slash = rest.find('/');
  Url u;
  u.host_port = rest.substr(0, slash);
  u.path = slash == std::string::npos ? "/" : rest.substr(slash);
  if (u.host_port.empty()) fail(Errc::InvalidConfig, "fetch_klines: endpoint names no host");
  return u;
}

float price_field(const nlohmann::json& v, bool* ok) {
  if (v.is_number()) {
    *ok = true;
    return v.get<float>();
  }
  if (v.is_string()) {
    const std::string& s = v.get_ref<const std::string&>();
    char* end = nullptr;
    float x = std::strtof(s.c_str(), &end);
    if (end == s.c_str() + s.size() && std::isfinite(x)) {
      *ok = true;
      return x;
    }
  }
  *ok = false;
  return 0.0f;
}

}  // namespace

OhlcvSeries fetch_klines(const std::string& endpoint, const std::string& symbol,
                         const std::string& interval, int64_t start_ms, int64_t end_ms,
                         AssetClass cls, const FetchOptions& opt, FetchReport* report) {
  if (start_ms >= end_ms) fail(Errc::EmptyRange, "fetch_klines: start must precede end");
  Url url = split_url(endpoint);
  httplib::Client cli(url.host_port);
  cli.set_connection_timeout(10, 0);
  cli.set_read_timeout(30, 0);

  FetchReport rep;
  OhlcvSeries out;
  out.asset_id = symbol;
  out.asset_class = cls;

  int64_t cursor = start_ms;
  while (cursor < end_ms) {
    std::string query = url.path + "?symbol=" + symbol + "&interval=" + interval +
                        "&startTime=" + std::to_string(cursor) +
                        "&endTime=" + std::to_string(end_ms) +
                        "&limit=" + std::to_string(opt.page_limit);

    httplib::Result res;
    int attempt = 0;
    for (;;) {
      ++rep.requests;
      res = cli.Get(query);
      bool transient = !res || res->status == 429 || res->status >= 500;
      if (!transient) break;
      if (attempt >= opt.max_retries) {
        if (report) *report = rep;
        if (res && res->status == 429) {
          std::string after = res->get_header_value("Retry-After");
          fail(Errc::RateLimited,
               "fetch_klines: rate limited" + (after.empty() ? "" : ", retry after " + after + "s"));
        }
        fail(Errc::NetworkError,
             res ? "fetch_klines: HTTP " + std::to_string(res->status)
                 : "fetch_klines: connection to " + url.host_port + " failed");
      }
      ++rep.retries;
      std::this_thread::sleep_for(std::chrono::milliseconds(opt.backoff_ms << attempt));
      ++attempt;
    }
    if (res->status < 200 || res->status >= 300) {
      if (report) *report = rep;
      fail(Errc::NetworkError, "fetch_klines: HTTP " + std::to_string(res->status));
    }

    nlohmann::json page;
    try {
      page = nlohmann::json::parse(res->body);
    } catch (const std::exception& e) {
      if (report) *report = rep;
      fail(Errc::NetworkError, std::string("fetch_klines: bad JSON: ") + e.what());
    }
    if (!page.is_array()) {
      if (report) *report = rep;
      fail(Errc::NetworkError, "fetch_klines: response is not a kline array");
    }
    if (page.empty()) break;

    int64_t last_open = cursor;
    for (const auto& k : page) {
      if (!k.is_array() || k.size() < 5) {
        if (report) *report = rep;
        fail(Errc::NetworkError, "fetch_klines: kline row too short");
      }
      int64_t open_ms = k[0].get<int64_t>();
      last_open = open_ms;
      if (open_ms >= end_ms) break;
      int64_t ts = open_ms / 60000;
      if (!out.ts.empty() && ts <= out.ts.back()) continue;  // page overlap guard
      bool ok = true, all_ok = true;
      std::array<float, 4> px;
      for (int i = 0; i < 4; ++i) {
        px[i] = price_field(k[i + 1], &ok);
        all_ok = all_ok && ok && px[i] > 0.0f;
      }
      out.ts.push_back(ts);
      out.px.push_back(px);
      out.present.push_back(all_ok ? 1 : 0);
    }
    if (static_cast<int>(page.size()) < opt.page_limit) break;
    cursor = last_open + 60000;
  }

  if (report) *report = rep;
  if (out.ts.empty()) fail(Errc::EmptyRange, "fetch_klines: no bars in range");
  return out;
}

}  // namespace tscx
