#include "tscx/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "tscx/error.hpp"

namespace tscx {

std::array<double, 17> FeatureVector::to_array() const {
  return {mean,       variance,      max,          min,        kurtosis,    skewness,
          autocorr_1, autocorr_2,    autocorr_3,   mean_diff,  mean_abs_diff,
          peak_to_peak, auc,         entropy,      n_max_peaks, n_min_peaks,
          n_zero_crossings};
}

const std::array<const char*, 17>& FeatureVector::names() {
  static const std::array<const char*, 17> kNames = {
      "mean",       "variance",      "max",          "min",        "kurtosis",
      "skewness",   "autocorr_1",    "autocorr_2",   "autocorr_3", "mean_diff",
      "mean_abs_diff", "peak_to_peak", "auc",        "entropy",    "n_max_peaks",
      "n_min_peaks", "n_zero_crossings"};
  return kNames;
}

std::pair<int, int> count_peaks(const std::vector<double>& x) {
  if (x.size() < 3) fail(Errc::SeriesTooShort, "count_peaks: need at least 3 points");
  int maxima = 0, minima = 0;
  for (size_t i = 1; i + 1 < x.size(); ++i) {
    if (x[i] > x[i - 1] && x[i] > x[i + 1]) ++maxima;
    if (x[i] < x[i - 1] && x[i] < x[i + 1]) ++minima;
  }
  return {maxima, minima};
}

int zero_crossings(const std::vector<double>& x) {
  int count = 0, prev = 0;
  for (double v : x) {
    int s = v > 0 ? 1 : (v < 0 ? -1 : 0);
    if (s == 0) continue;
    if (prev != 0 && s != prev) ++count;
    prev = s;
  }
  return count;
}

double entropy(const std::vector<double>& x, int bins) {
  if (x.empty() || bins < 1) return 0.0;
  double lo = x[0], hi = x[0];
  for (double v : x) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo == hi) return 0.0;
  std::vector<int> counts(bins, 0);
  const double width = (hi - lo) / bins;
  for (double v : x) {
    int b = static_cast<int>((v - lo) / width);
    counts[std::min(b, bins - 1)]++;
  }
  double h = 0.0;
  const double n = static_cast<double>(x.size());
  for (int c : counts)
    if (c > 0) {
      double p = c / n;
      h -= p * std::log(p);
    }
  return h;
}

FeatureVector extract_features(const std::vector<double>& x) {
  const size_t L = x.size();
  if (L < 4)
    fail(Errc::SeriesTooShort,
         "extract_features: need at least 4 points, have " + std::to_string(L));

  FeatureVector f;
  double sum = 0;
  f.max = f.min = x[0];
  for (double v : x) {
    sum += v;
    f.max = std::max(f.max, v);
    f.min = std::min(f.min, v);
  }
  f.mean = sum / static_cast<double>(L);
  f.peak_to_peak = f.max - f.min;

  double m2 = 0, m3 = 0, m4 = 0;
  for (double v : x) {
    double d = v - f.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= static_cast<double>(L);
  m3 /= static_cast<double>(L);
  m4 /= static_cast<double>(L);
  f.variance = m2;
  if (m2 > 0) {
    f.skewness = m3 / std::pow(m2, 1.5);
    f.kurtosis = m4 / (m2 * m2) - 3.0;
  }

  double denom = 0;
  for (double v : x) denom += (v - f.mean) * (v - f.mean);
  double* acf[3] = {&f.autocorr_1, &f.autocorr_2, &f.autocorr_3};
  for (int k = 1; k <= 3; ++k) {
    if (denom == 0) break;  // constant: leave at 0
    double num = 0;
    for (size_t t = 0; t + k < L; ++t) num += (x[t] - f.mean) * (x[t + k] - f.mean);
    *acf[k - 1] = num / denom;
  }

  double dsum = 0, adsum = 0;
  for (size_t t = 1; t < L; ++t) {
    double d = x[t] - x[t - 1];
    dsum += d;
    adsum += std::abs(d);
  }
  f.mean_diff = dsum / static_cast<double>(L - 1);
  f.mean_abs_diff = adsum / static_cast<double>(L - 1);

  for (size_t t = 1; t < L; ++t) f.auc += 0.5 * (x[t - 1] + x[t]);

  f.entropy = tscx::entropy(x, 10);
  auto [mx, mn] = count_peaks(x);
  f.n_max_peaks = mx;
  f.n_min_peaks = mn;
  f.n_zero_crossings = zero_crossings(x);
  return f;
}

std::string to_string(FeatureSetting s) {
  switch (s) {
    case FeatureSetting::P: return "P";
    case FeatureSetting::R: return "R";
    case FeatureSetting::NP: return "NP";
    case FeatureSetting::NR: return "NR";
    case FeatureSetting::PR: return "P+R";
    default: return "NP+NR";
  }
}

FeatureSetting feature_setting_from(const std::string& s) {
  if (s == "P") return FeatureSetting::P;
  if (s == "R") return FeatureSetting::R;
  if (s == "NP") return FeatureSetting::NP;
  if (s == "NR") return FeatureSetting::NR;
  if (s == "P+R") return FeatureSetting::PR;
  if (s == "NP+NR") return FeatureSetting::NPNR;
  fail(Errc::InvalidConfig, "unknown feature setting '" + s + "' (P|R|NP|NR|P+R|NP+NR)");
}

namespace {

std::vector<double> one_block(FeatureSetting setting, const Sample& sample) {
  Sample work;
  switch (setting) {
    case FeatureSetting::P: work = sample; break;
    case FeatureSetting::R: work = to_returns(sample); break;
    case FeatureSetting::NP: work = normalize(sample); break;
    case FeatureSetting::NR: work = normalize(to_returns(sample)); break;
    default: fail(Errc::InvalidConfig, "one_block: composite setting");
  }
  auto arr = extract_features(work.values).to_array();
  return {arr.begin(), arr.end()};
}

}  // namespace

std::vector<double> assemble(FeatureSetting setting, const Sample& sample) {
  if (sample.channels != 1)
    fail(Errc::InvalidConfig, "assemble: feature extraction wants the close channel only");
  if (setting == FeatureSetting::PR || setting == FeatureSetting::NPNR) {
    auto p = one_block(setting == FeatureSetting::PR ? FeatureSetting::P : FeatureSetting::NP,
                       sample);
    auto r = one_block(setting == FeatureSetting::PR ? FeatureSetting::R : FeatureSetting::NR,
                       sample);
    p.insert(p.end(), r.begin(), r.end());
    return p;
  }
  return one_block(setting, sample);
}

std::vector<std::string> feature_names(FeatureSetting setting) {
  std::vector<std::string> out;
  if (setting == FeatureSetting::PR || setting == FeatureSetting::NPNR) {
    for (const char* n : FeatureVector::names()) out.push_back(std::string("p_") + n);
    for (const char* n : FeatureVector::names()) out.push_back(std::string("r_") + n);
  } else {
    for (const char* n : FeatureVector::names()) out.push_back(n);
  }
  return out;
}

FeatureMatrix feature_matrix(FeatureSetting setting, const std::vector<Sample>& samples) {
  FeatureMatrix m;
  m.columns = feature_names(setting);
  m.rows.reserve(samples.size());
  m.labels.reserve(samples.size());
  for (const auto& s : samples) {
    m.rows.push_back(assemble(setting, s));
    m.labels.push_back(s.label);
  }
  return m;
}

void save_feature_csv(const FeatureMatrix& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) fail(Errc::IoError, "save_feature_csv: cannot write " + path);
  for (const auto& c : m.columns) f << c << ',';
  f << "label\n";
  char buf[32];
  for (size_t i = 0; i < m.rows.size(); ++i) {
    for (double v : m.rows[i]) {
      std::snprintf(buf, sizeof buf, "%.12g", v);
      f << buf << ',';
    }
    f << m.labels[i] << '\n';
  }
  f.close();
  if (!f) fail(Errc::IoError, "save_feature_csv: write failed for " + path);
}

}  // namespace tscx
