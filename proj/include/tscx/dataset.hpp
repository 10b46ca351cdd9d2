#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tscx/ingest.hpp"

namespace tscx {

enum class Granularity { Daily, Weekly };
enum class ChannelMode { CloseOnly, AllFour };
enum class Split { Train, Val, Test };

std::string to_string(Granularity g);
std::string to_string(ChannelMode m);
std::string to_string(Split s);
Granularity granularity_from(const std::string& s);
ChannelMode channel_mode_from(const std::string& s);
Split split_from(const std::string& s);

/// One classification unit: a day (391 rows) or a 5-day week (1955 rows),
/// with 1 (close) or 4 (open, high, low, close) channels. Values are kept
/// in double so normalization is exactly idempotent; they narrow to float
/// only when handed to a model.
struct Sample {
  std::vector<double> values;  // row-major [length x channels]
  int length = 0;
  int channels = 1;
  int label = 0;  // 0 = stock, 1 = crypto
  std::string asset_id;
  int64_t period_id = 0;  // day ordinal or week ordinal within the series
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<Split> split_assignment;  // parallel to samples; empty pre-split
  uint64_t seed = 0;
};

/// Cuts an aligned series into daily samples (one per trading day) or weekly
/// samples (one per run of 5 consecutive Mon..Fri trading days; shorter
/// holiday weeks are skipped).
std::vector<Sample> segment(const AlignedSeries& series, Granularity g, ChannelMode mode);

/// Per-channel z-score with population statistics; a constant channel maps
/// to all zeros. Idempotent.
Sample normalize(const Sample& s);

/// Simple returns (p_t - p_{t-1}) / p_{t-1}, per channel; output is one
/// shorter. Apply to raw prices, before any normalization.
Sample to_returns(const Sample& s);

/// Deterministic stratified split: test_frac of each label to Test, then
/// val_frac of each label's remainder to Val, rest Train.
Dataset stratified_split(std::vector<Sample> samples, uint64_t seed, double test_frac = 0.2,
                         double val_frac = 0.2);

/// Undersamples the majority class (without replacement) down to the
/// minority count. Meant to run before splitting; any existing split
/// assignment is dropped.
Dataset balance(const Dataset& ds, uint64_t seed);

/// Writes <prefix>.manifest (one text record per sample) and <prefix>.bin
/// (float64 tensors, declared order).
void save_dataset(const Dataset& ds, const std::string& prefix);
Dataset load_dataset(const std::string& prefix);

}  // namespace tscx
