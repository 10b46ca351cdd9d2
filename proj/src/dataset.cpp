#include "tscx/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "tscx/error.hpp"
#include "tscx/rng.hpp"
#include "tscx/timeutil.hpp"

namespace tscx {

std::string to_string(Granularity g) { return g == Granularity::Daily ? "daily" : "weekly"; }
std::string to_string(ChannelMode m) { return m == ChannelMode::CloseOnly ? "close" : "ohlc"; }
std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    default: return "test";
  }
}

Granularity granularity_from(const std::string& s) {
  if (s == "daily") return Granularity::Daily;
  if (s == "weekly") return Granularity::Weekly;
  fail(Errc::InvalidConfig, "unknown granularity '" + s + "' (daily|weekly)");
}

ChannelMode channel_mode_from(const std::string& s) {
  if (s == "close") return ChannelMode::CloseOnly;
  if (s == "ohlc") return ChannelMode::AllFour;
  fail(Errc::InvalidConfig, "unknown channel mode '" + s + "' (close|ohlc)");
}

Split split_from(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  fail(Errc::InvalidConfig, "unknown split '" + s + "'");
}

namespace {

constexpr int kSlots = 391;

Sample cut(const AlignedSeries& series, size_t row0, int rows, ChannelMode mode,
           int64_t period_id) {
  Sample s;
  s.length = rows;
  s.channels = mode == ChannelMode::AllFour ? 4 : 1;
  s.label = series.asset_class == AssetClass::Crypto ? 1 : 0;
  s.asset_id = series.asset_id;
  s.period_id = period_id;
  s.values.reserve(static_cast<size_t>(rows) * s.channels);
  for (int r = 0; r < rows; ++r) {
    const float* v = &series.values[(row0 + r) * 4];
    if (mode == ChannelMode::AllFour) {
      for (int c = 0; c < 4; ++c) s.values.push_back(v[c]);
    } else {
      s.values.push_back(v[3]);
    }
  }
  return s;
}

}  // namespace

std::vector<Sample> segment(const AlignedSeries& series, Granularity g, ChannelMode mode) {
  if (series.rows() != static_cast<size_t>(series.days) * kSlots)
    fail(Errc::MisalignedSeries, "segment: series rows do not match day count");
  std::vector<Sample> out;
  if (g == Granularity::Daily) {
    out.reserve(series.days);
    for (int d = 0; d < series.days; ++d)
      out.push_back(cut(series, static_cast<size_t>(d) * kSlots, kSlots, mode, d));
    return out;
  }
  if (series.day_dates.size() != static_cast<size_t>(series.days))
    fail(Errc::InvalidConfig, "segment: weekly cut needs per-day dates on the series");
  // a week is 5 consecutive civil days starting on a Monday, all trading
  int64_t week_ord = 0;
  for (int d = 0; d + 4 < series.days;) {
    int32_t start = series.day_dates[d];
    bool run = weekday_from_days(start) == 1;
    for (int k = 1; run && k <= 4; ++k) run = series.day_dates[d + k] == start + k;
    if (run) {
      out.push_back(cut(series, static_cast<size_t>(d) * kSlots, 5 * kSlots, mode, week_ord++));
      d += 5;
    } else {
      ++d;
    }
  }
  return out;
}

Sample normalize(const Sample& s) {
  Sample out = s;
  const int C = s.channels, L = s.length;
  for (int c = 0; c < C; ++c) {
    double lo = s.values[c], hi = s.values[c], sum = 0.0;
    for (int t = 0; t < L; ++t) {
      double v = s.values[static_cast<size_t>(t) * C + c];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    if (lo == hi) {
      for (int t = 0; t < L; ++t) out.values[static_cast<size_t>(t) * C + c] = 0.0;
      continue;
    }
    double mean = sum / L;
    double ss = 0.0;
    for (int t = 0; t < L; ++t) {
      double d = s.values[static_cast<size_t>(t) * C + c] - mean;
      ss += d * d;
    }
    double inv = 1.0 / std::sqrt(ss / L);  // population sigma
    for (int t = 0; t < L; ++t)
      out.values[static_cast<size_t>(t) * C + c] =
          (s.values[static_cast<size_t>(t) * C + c] - mean) * inv;
  }
  return out;
}

Sample to_returns(const Sample& s) {
  if (s.length < 2) fail(Errc::SeriesTooShort, "to_returns: need at least 2 points");
  Sample out;
  out.length = s.length - 1;
  out.channels = s.channels;
  out.label = s.label;
  out.asset_id = s.asset_id;
  out.period_id = s.period_id;
  out.values.resize(static_cast<size_t>(out.length) * out.channels);
  const int C = s.channels;
  for (int t = 1; t < s.length; ++t) {
    for (int c = 0; c < C; ++c) {
      double prev = s.values[static_cast<size_t>(t - 1) * C + c];
      if (prev == 0.0)
        fail(Errc::ZeroPrice, "to_returns: zero price in " + s.asset_id + " at step " +
                                  std::to_string(t - 1));
      out.values[static_cast<size_t>(t - 1) * C + c] =
          (s.values[static_cast<size_t>(t) * C + c] - prev) / prev;
    }
  }
  return out;
}

Dataset stratified_split(std::vector<Sample> samples, uint64_t seed, double test_frac,
                         double val_frac) {
  if (test_frac < 0 || test_frac >= 1 || val_frac < 0 || val_frac >= 1)
    fail(Errc::InvalidConfig, "split fractions must lie in [0, 1)");
  std::map<int, std::vector<size_t>> by_label;
  for (size_t i = 0; i < samples.size(); ++i) by_label[samples[i].label].push_back(i);
  if (by_label.empty()) fail(Errc::TooFewSamples, "stratified_split: no samples");
  for (const auto& [lab, idx] : by_label)
    if (idx.size() < 5)
      fail(Errc::TooFewSamples, "stratified_split: label " + std::to_string(lab) + " has only " +
                                    std::to_string(idx.size()) + " samples (need 5)");

  Rng rng(seed);
  std::vector<Split> assign(samples.size(), Split::Train);
  for (auto& [lab, idx] : by_label) {
    (void)lab;
    rng.shuffle(idx);
    size_t n = idx.size();
    size_t n_test = static_cast<size_t>(std::llround(test_frac * n));
    size_t n_val = static_cast<size_t>(std::llround(val_frac * (n - n_test)));
    for (size_t k = 0; k < n; ++k)
      assign[idx[k]] = k < n_test ? Split::Test : (k < n_test + n_val ? Split::Val : Split::Train);
  }

  Dataset ds;
  ds.samples = std::move(samples);
  ds.split_assignment = std::move(assign);
  ds.seed = seed;
  return ds;
}

Dataset balance(const Dataset& ds, uint64_t seed) {
  std::map<int, std::vector<size_t>> by_label;
  for (size_t i = 0; i < ds.samples.size(); ++i) by_label[ds.samples[i].label].push_back(i);
  if (by_label.size() != 2)
    fail(Errc::InvalidConfig, "balance: need exactly two classes, have " +
                                  std::to_string(by_label.size()));
  auto it = by_label.begin();
  const std::vector<size_t>& a = it->second;
  const std::vector<size_t>& b = std::next(it)->second;
  const std::vector<size_t>& minority = a.size() <= b.size() ? a : b;
  const std::vector<size_t>& majority = a.size() <= b.size() ? b : a;

  std::vector<uint8_t> keep(ds.samples.size(), 0);
  for (size_t i : minority) keep[i] = 1;
  if (majority.size() == minority.size()) {
    for (size_t i : majority) keep[i] = 1;
  } else {
    Rng rng(seed);
    for (size_t pos : rng.sample_without_replacement(majority.size(), minority.size()))
      keep[majority[pos]] = 1;
  }

  Dataset out;
  out.seed = seed;
  out.samples.reserve(2 * minority.size());
  for (size_t i = 0; i < ds.samples.size(); ++i)
    if (keep[i]) out.samples.push_back(ds.samples[i]);
  return out;
}

// --- manifest + blob container -------------------------------------------

void save_dataset(const Dataset& ds, const std::string& prefix) {
  if (ds.samples.empty()) fail(Errc::InvalidConfig, "save_dataset: empty dataset");
  const int L = ds.samples[0].length, C = ds.samples[0].channels;
  for (const auto& s : ds.samples)
    if (s.length != L || s.channels != C)
      fail(Errc::InvalidConfig, "save_dataset: samples disagree on shape");
  const bool split = !ds.split_assignment.empty();
  if (split && ds.split_assignment.size() != ds.samples.size())
    fail(Errc::InvalidConfig, "save_dataset: split assignment length mismatch");

  std::string bin_path = prefix + ".bin";
  size_t slash = bin_path.find_last_of('/');
  std::string bin_base = slash == std::string::npos ? bin_path : bin_path.substr(slash + 1);

  std::ofstream mf(prefix + ".manifest");
  if (!mf) fail(Errc::IoError, "save_dataset: cannot write " + prefix + ".manifest");
  mf << "tscx-dataset 1 samples=" << ds.samples.size() << " length=" << L << " channels=" << C
     << " dtype=f64 seed=" << ds.seed << " blob=" << bin_base << "\n";
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    if (s.asset_id.find_first_of("\t\n") != std::string::npos)
      fail(Errc::InvalidConfig, "save_dataset: asset id contains tab/newline");
    mf << s.asset_id << '\t' << s.period_id << '\t' << s.label << '\t'
       << (split ? to_string(ds.split_assignment[i]) : "-") << '\n';
  }
  mf.close();
  if (!mf) fail(Errc::IoError, "save_dataset: write failed for " + prefix + ".manifest");

  std::ofstream bf(bin_path, std::ios::binary);
  if (!bf) fail(Errc::IoError, "save_dataset: cannot write " + bin_path);
  for (const auto& s : ds.samples)
    bf.write(reinterpret_cast<const char*>(s.values.data()),
             static_cast<std::streamsize>(s.values.size() * sizeof(double)));
  bf.close();
  if (!bf) fail(Errc::IoError, "save_dataset: write failed for " + bin_path);
}

Dataset load_dataset(const std::string& prefix) {
  std::ifstream mf(prefix + ".manifest");
  if (!mf) fail(Errc::IoError, "load_dataset: cannot open " + prefix + ".manifest");
  std::string header;
  std::getline(mf, header);
  std::istringstream hs(header);
  std::string magic, version;
  hs >> magic >> version;
  if (magic != "tscx-dataset" || version != "1")
    fail(Errc::IoError, "load_dataset: bad header '" + header + "'");
  size_t n = 0;
  int L = 0, C = 0;
  uint64_t seed = 0;
  std::string blob, dtype;
  std::string kv;
  while (hs >> kv) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos) fail(Errc::IoError, "load_dataset: bad header field " + kv);
    std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    if (key == "samples") n = std::stoull(val);
    else if (key == "length") L = std::stoi(val);
    else if (key == "channels") C = std::stoi(val);
    else if (key == "dtype") dtype = val;
    else if (key == "seed") seed = std::stoull(val);
    else if (key == "blob") blob = val;
  }
  if (n == 0 || L <= 0 || C <= 0 || blob.empty() || dtype != "f64")
    fail(Errc::IoError, "load_dataset: incomplete header '" + header + "'");

  Dataset ds;
  ds.seed = seed;
  bool any_split = false;
  std::string line;
  for (size_t i = 0; i < n; ++i) {
    if (!std::getline(mf, line))
      fail(Errc::IoError, "load_dataset: manifest truncated at record " + std::to_string(i));
    std::istringstream ls(line);
    Sample s;
    std::string split_txt;
    std::getline(ls, s.asset_id, '\t');
    std::string pid_txt, lab_txt;
    std::getline(ls, pid_txt, '\t');
    std::getline(ls, lab_txt, '\t');
    std::getline(ls, split_txt, '\t');
    if (pid_txt.empty() || lab_txt.empty() || split_txt.empty())
      fail(Errc::IoError, "load_dataset: malformed record " + std::to_string(i));
    s.period_id = std::stoll(pid_txt);
    s.label = std::stoi(lab_txt);
    s.length = L;
    s.channels = C;
    ds.samples.push_back(std::move(s));
    if (split_txt != "-") {
      ds.split_assignment.resize(n, Split::Train);
      ds.split_assignment[i] = split_from(split_txt);
      any_split = true;
    }
  }
  if (!any_split) ds.split_assignment.clear();

  size_t slash = prefix.find_last_of('/');
  std::string dir = slash == std::string::npos ? "" : prefix.substr(0, slash + 1);
  std::ifstream bf(dir + blob, std::ios::binary | std::ios::ate);
  if (!bf) fail(Errc::IoError, "load_dataset: cannot open blob " + dir + blob);
  const size_t per = static_cast<size_t>(L) * C * sizeof(double);
  size_t bytes = static_cast<size_t>(bf.tellg());
  if (bytes != per * n)
    fail(Errc::IoError, "load_dataset: blob holds " + std::to_string(bytes) + " bytes, expected " +
                            std::to_string(per * n));
  bf.seekg(0);
  for (auto& s : ds.samples) {
    s.values.resize(static_cast<size_t>(L) * C);
    bf.read(reinterpret_cast<char*>(s.values.data()), static_cast<std::streamsize>(per));
    if (!bf) fail(Errc::IoError, "load_dataset: blob read failed");
  }
  return ds;
}

}  // namespace tscx
