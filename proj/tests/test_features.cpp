#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "tscx/error.hpp"
#include "tscx/features.hpp"
#include "tscx/rng.hpp"

using namespace tscx;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::IoError;
}

// Direct-definition oracle, written from the formulas with no shared code.
struct NaiveFeatures {
  double vals[17];
};

NaiveFeatures naive(const std::vector<double>& x) {
  const double L = static_cast<double>(x.size());
  NaiveFeatures f{};
  double mean = 0;
  for (double v : x) mean += v;
  mean /= L;
  double mx = x[0], mn = x[0];
  for (double v : x) {
    if (v > mx) mx = v;
    if (v < mn) mn = v;
  }
  double m2 = 0, m3 = 0, m4 = 0;
  for (double v : x) {
    m2 += std::pow(v - mean, 2);
    m3 += std::pow(v - mean, 3);
    m4 += std::pow(v - mean, 4);
  }
  double denom = m2;  // unnormalized sum of squared deviations
  m2 /= L;
  m3 /= L;
  m4 /= L;
  double skew = m2 > 0 ? m3 / std::pow(m2, 1.5) : 0.0;
  double kurt = m2 > 0 ? m4 / (m2 * m2) - 3.0 : 0.0;
  double acf[3] = {0, 0, 0};
  for (int k = 1; k <= 3; ++k) {
    if (denom == 0) continue;
    double num = 0;
    for (size_t t = 0; t + k < x.size(); ++t) num += (x[t] - mean) * (x[t + k] - mean);
    acf[k - 1] = num / denom;
  }
  double md = 0, mad = 0;
  for (size_t t = 1; t < x.size(); ++t) {
    md += x[t] - x[t - 1];
    mad += std::fabs(x[t] - x[t - 1]);
  }
  md /= L - 1;
  mad /= L - 1;
  double auc = 0;
  for (size_t t = 1; t < x.size(); ++t) auc += (x[t - 1] + x[t]) / 2.0;
  // entropy: 10 equal-width bins over [min, max], natural log
  double ent = 0;
  if (mx > mn) {
    int counts[10] = {0};
    for (double v : x) {
      int b = static_cast<int>(std::floor((v - mn) / (mx - mn) * 10.0));
      if (b > 9) b = 9;
      if (b < 0) b = 0;
      counts[b]++;
    }
    for (int c : counts)
      if (c) ent -= (c / L) * std::log(c / L);
  }
  int peaks_hi = 0, peaks_lo = 0;
  for (size_t i = 1; i + 1 < x.size(); ++i) {
    if (x[i - 1] < x[i] && x[i + 1] < x[i]) peaks_hi++;
    if (x[i - 1] > x[i] && x[i + 1] > x[i]) peaks_lo++;
  }
  int zc = 0;
  {
    int last = 0;
    for (double v : x) {
      int s = (v > 0) - (v < 0);
      if (!s) continue;
      if (last && s != last) zc++;
      last = s;
    }
  }
  double out[17] = {mean, m2,  mx,  mn,  kurt, skew, acf[0], acf[1], acf[2],
                    md,   mad, mx - mn, auc, ent,  double(peaks_hi), double(peaks_lo),
                    double(zc)};
  for (int i = 0; i < 17; ++i) f.vals[i] = out[i];
  return f;
}

}  // namespace

TEST_CASE("hand-computed catalog for [1,2,3,4]") {
  auto f = extract_features({1, 2, 3, 4});
  CHECK(f.mean == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(f.variance == doctest::Approx(1.25).epsilon(1e-12));
  CHECK(f.max == 4.0);
  CHECK(f.min == 1.0);
  CHECK(f.peak_to_peak == 3.0);
  CHECK(f.mean_diff == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.mean_abs_diff == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.n_zero_crossings == 0.0);
  CHECK(f.autocorr_1 == doctest::Approx(0.25).epsilon(1e-12));       // 1.25 / 5
  CHECK(f.autocorr_2 == doctest::Approx(-0.3).epsilon(1e-12));       // -1.5 / 5
  CHECK(f.autocorr_3 == doctest::Approx(-0.45).epsilon(1e-12));      // -2.25 / 5
  CHECK(f.skewness == doctest::Approx(0.0).scale(1));                // symmetric
  CHECK(f.kurtosis == doctest::Approx(-1.36).epsilon(1e-12));        // 2.5625/1.5625 - 3
  CHECK(f.auc == doctest::Approx(7.5).epsilon(1e-12));
  CHECK(f.entropy == doctest::Approx(std::log(4.0)).epsilon(1e-12)); // 4 occupied bins
  CHECK(f.n_max_peaks == 0.0);
  CHECK(f.n_min_peaks == 0.0);

  CHECK(code_of([] { extract_features({1, 2, 3}); }) == Errc::SeriesTooShort);
}

TEST_CASE("peak counting") {
  auto [mx, mn] = count_peaks({0, 1, 0, 2, 0});
  CHECK(mx == 2);
  CHECK(mn == 1);
  auto mono = count_peaks({1, 2, 3, 4});
  CHECK(mono.first == 0);
  CHECK(mono.second == 0);
  auto plateau = count_peaks({0, 1, 1, 0});
  CHECK(plateau.first == 0);  // strict on both sides
  CHECK(plateau.second == 0);
  CHECK(code_of([] { count_peaks({1, 2}); }) == Errc::SeriesTooShort);
}

TEST_CASE("zero crossings") {
  CHECK(zero_crossings({1, -1, 1}) == 2);
  CHECK(zero_crossings({1, 0, -1}) == 1);  // the zero itself is not a crossing
  CHECK(zero_crossings({5, 4, 3, 2, 1}) == 0);
  CHECK(zero_crossings({0, 0, 0}) == 0);
  CHECK(zero_crossings({}) == 0);
  CHECK(zero_crossings({-1, 0, 0, 2, -3}) == 2);
}

TEST_CASE("entropy") {
  CHECK(entropy({7, 7, 7, 7}) == 0.0);
  std::vector<double> uniform;
  for (int rep = 0; rep < 3; ++rep)
    for (int b = 0; b < 10; ++b) uniform.push_back(b + 0.5);  // 0.5 .. 9.5, equal mass
  CHECK(entropy(uniform) == doctest::Approx(std::log(10.0)).epsilon(1e-12));

  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> x(40);
    for (auto& v : x) v = rng.normal();
    double h = entropy(x);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(10.0) + 1e-12);
  }
}

TEST_CASE("catalog matches the direct-definition oracle on 1000 series") {
  Rng rng(99);
  double worst = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    size_t L = 4 + rng.below(297);
    std::vector<double> x(L);
    int kind = rep % 4;
    double level = rng.uniform(-50, 150);
    for (size_t t = 0; t < L; ++t) {
      switch (kind) {
        case 0: x[t] = rng.normal(); break;
        case 1: x[t] = level + 3.0 * rng.normal(); break;
        case 2: x[t] = (t ? x[t - 1] : level) + rng.normal(); break;           // walk
        default: x[t] = std::floor(rng.uniform(-3, 4)); break;                 // ties
      }
    }
    auto got = extract_features(x).to_array();
    auto want = naive(x);
    for (int i = 0; i < 17; ++i) {
      double diff = std::abs(got[i] - want.vals[i]);
      worst = std::max(worst, diff);
      if (diff >= 1e-9) {
        CAPTURE(rep);
        CAPTURE(i);
        CHECK(diff < 1e-9);
      }
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("invariances") {
  Rng rng(31);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<double> x(60);
    for (auto& v : x) v = rng.normal() * 2.0;
    auto base = extract_features(x);

    // shift by a constant: peak structure untouched
    std::vector<double> shifted = x;
    double c = rng.uniform(-100, 100);
    for (auto& v : shifted) v += c;
    auto sh = extract_features(shifted);
    CHECK(sh.n_max_peaks == base.n_max_peaks);
    CHECK(sh.n_min_peaks == base.n_min_peaks);
    CHECK(sh.peak_to_peak == doctest::Approx(base.peak_to_peak).epsilon(1e-9));

    // positive scaling: shape statistics untouched
    std::vector<double> scaled = x;
    double k = rng.uniform(0.1, 25.0);
    for (auto& v : scaled) v *= k;
    auto sc = extract_features(scaled);
    CHECK(sc.autocorr_1 == doctest::Approx(base.autocorr_1).epsilon(1e-9));
    CHECK(sc.autocorr_2 == doctest::Approx(base.autocorr_2).epsilon(1e-9));
    CHECK(sc.autocorr_3 == doctest::Approx(base.autocorr_3).epsilon(1e-9));
    CHECK(sc.skewness == doctest::Approx(base.skewness).epsilon(1e-9));
    CHECK(sc.kurtosis == doctest::Approx(base.kurtosis).epsilon(1e-9));

    CHECK(base.peak_to_peak == base.max - base.min);
    CHECK(base.autocorr_1 >= -1.0);
    CHECK(base.autocorr_1 <= 1.0);
    CHECK(base.variance >= 0.0);
  }
}

TEST_CASE("assemble settings") {
  Sample s;
  s.channels = 1;
  s.length = 391;
  s.label = 1;
  s.asset_id = "A";
  Rng rng(4);
  double p = 100;
  for (int t = 0; t < 391; ++t) {
    p *= 1.0 + 0.001 * rng.normal();
    s.values.push_back(p);
  }

  auto P = assemble(FeatureSetting::P, s);
  auto R = assemble(FeatureSetting::R, s);
  auto NP = assemble(FeatureSetting::NP, s);
  auto PR = assemble(FeatureSetting::PR, s);
  auto NPNR = assemble(FeatureSetting::NPNR, s);
  CHECK(P.size() == 17);
  CHECK(R.size() == 17);
  CHECK(PR.size() == 34);
  CHECK(NPNR.size() == 34);
  for (int i = 0; i < 17; ++i) {
    CHECK(PR[i] == P[i]);
    CHECK(PR[17 + i] == R[i]);
  }
  // z-scored price block: mean 0, variance 1 by construction
  CHECK(std::abs(NP[0]) < 1e-9);
  CHECK(std::abs(NP[1] - 1.0) < 1e-9);

  // raw prices never cross zero; returns do
  CHECK(P[16] == 0.0);
  CHECK(R[16] > 0.0);

  SUBCASE("constant prices give all-zero returns") {
    Sample flat = s;
    for (auto& v : flat.values) v = 50.0;
    auto r = assemble(FeatureSetting::R, flat);
    CHECK(r[0] == 0.0);  // mean
    CHECK(r[1] == 0.0);  // variance
  }

  SUBCASE("multichannel samples rejected") {
    Sample four = s;
    four.channels = 4;
    four.length = s.length / 4;
    CHECK(code_of([&] { assemble(FeatureSetting::P, four); }) == Errc::InvalidConfig);
  }

  SUBCASE("names") {
    auto plain = feature_names(FeatureSetting::NR);
    REQUIRE(plain.size() == 17);
    CHECK(plain[0] == "mean");
    CHECK(plain[16] == "n_zero_crossings");
    auto both = feature_names(FeatureSetting::NPNR);
    REQUIRE(both.size() == 34);
    CHECK(both[0] == "p_mean");
    CHECK(both[17] == "r_mean");
    CHECK(both[33] == "r_n_zero_crossings");
    CHECK(to_string(feature_setting_from("NP+NR")) == "NP+NR");
    CHECK(code_of([] { feature_setting_from("Q"); }) == Errc::InvalidConfig);
  }
}

TEST_CASE("csv export") {
  std::vector<Sample> pool;
  Rng rng(8);
  for (int i = 0; i < 4; ++i) {
    Sample s;
    s.channels = 1;
    s.length = 32;
    s.label = i % 2;
    double p = 100;
    for (int t = 0; t < 32; ++t) {
      p *= 1.0 + 0.01 * rng.normal();
      s.values.push_back(p);
    }
    pool.push_back(s);
  }
  auto m = feature_matrix(FeatureSetting::PR, pool);
  REQUIRE(m.rows.size() == 4);
  REQUIRE(m.columns.size() == 34);
  save_feature_csv(m, "feat_rt.csv");

  std::ifstream f("feat_rt.csv");
  std::string header;
  std::getline(f, header);
  CHECK(header.rfind("p_mean,", 0) == 0);
  CHECK(header.find("r_n_zero_crossings,label") != std::string::npos);
  int rows = 0;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    ++rows;
    // last field is the integer label
    auto pos = line.find_last_of(',');
    CHECK((line.substr(pos + 1) == "0" || line.substr(pos + 1) == "1"));
    std::istringstream ls(line.substr(0, pos));
    std::string cell;
    int cells = 0;
    while (std::getline(ls, cell, ',')) {
      ++cells;
      size_t used = 0;
      std::stod(cell, &used);
      CHECK(used == cell.size());
    }
    CHECK(cells == 34);
  }
  CHECK(rows == 4);
  std::remove("feat_rt.csv");
}
