#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "tscx/dataset.hpp"

namespace tscx {

/// The interpretable per-series descriptors, in the fixed catalog order
/// used everywhere (struct fields, to_array, CSV columns).
struct FeatureVector {
  double mean = 0, variance = 0, max = 0, min = 0;
  double kurtosis = 0, skewness = 0;  // excess kurtosis; Fisher skewness
  double autocorr_1 = 0, autocorr_2 = 0, autocorr_3 = 0;
  double mean_diff = 0, mean_abs_diff = 0, peak_to_peak = 0;
  double auc = 0, entropy = 0;
  double n_max_peaks = 0, n_min_peaks = 0, n_zero_crossings = 0;

  std::array<double, 17> to_array() const;
  static const std::array<const char*, 17>& names();
};

/// All 17 descriptors of a series. Needs length >= 4 (lag-3 autocorrelation).
FeatureVector extract_features(const std::vector<double>& x);

/// (local-maximum count, local-minimum count); interior points only, strict
/// inequality on both sides. Needs length >= 3.
std::pair<int, int> count_peaks(const std::vector<double>& x);

/// Strict sign changes between consecutive nonzero values.
int zero_crossings(const std::vector<double>& x);

/// Shannon entropy (natural log) of the equal-width histogram over
/// [min, max]; constant series give 0.
double entropy(const std::vector<double>& x, int bins = 10);

/// Which series the features are computed on: raw prices (P), raw returns
/// (R), their z-scored versions (NP/NR), or a concatenated pair.
enum class FeatureSetting { P, R, NP, NR, PR, NPNR };

std::string to_string(FeatureSetting s);
FeatureSetting feature_setting_from(const std::string& s);

/// Feature row for one close-channel sample; 17 values, or 34 for the
/// concatenated settings (price block first).
std::vector<double> assemble(FeatureSetting setting, const Sample& sample);
std::vector<std::string> feature_names(FeatureSetting setting);

struct FeatureMatrix {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;  // parallel to rows
};

FeatureMatrix feature_matrix(FeatureSetting setting, const std::vector<Sample>& samples);

/// Columns, then `label`, one row per sample.
void save_feature_csv(const FeatureMatrix& m, const std::string& path);

}  // namespace tscx
