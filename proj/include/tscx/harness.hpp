#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tscx/classical.hpp"
#include "tscx/dataset.hpp"
#include "tscx/features.hpp"
#include "tscx/train.hpp"

namespace tscx {

enum class Balance { Balanced, Unbalanced };
enum class Representation { Price, Return };
enum class Track { Neural, Classical };

std::string to_string(Balance b);
std::string to_string(Representation r);
std::string to_string(Track t);
Balance balance_from(const std::string& s);
Representation representation_from(const std::string& s);
Track track_from(const std::string& s);

/// One experiment cell. The neural track trains `model` (optionally with an
/// `arch` override); the classical track fits `classifier` on `features`.
/// The Return representation applies to daily close series only; the
/// classical track encodes its series form in the feature setting instead.
struct ExperimentConfig {
  Granularity granularity = Granularity::Daily;
  ChannelMode channels = ChannelMode::CloseOnly;
  Balance balance = Balance::Balanced;
  Representation representation = Representation::Price;
  Track track = Track::Neural;
  std::string model = "CNN";  // neural: named model
  std::string arch;           // neural: override string; empty = named default
  int width_divisor = 1;      // neural: scales hidden widths for small runs
  ClassifierKind classifier = ClassifierKind::RF;  // classical
  FeatureSetting features = FeatureSetting::NP;    // classical
  int repeats = 5;
  uint64_t seed = 0;
  TrainConfig train;          // neural knobs; per-repeat seed overrides train.seed
  ClassicalParams classical;  // classical knobs
};

/// Throws Error(InvalidConfig) on contradictions (repeats < 1, weekly
/// returns, classical track with a non-default representation or with
/// four-channel input).
void validate(const ExperimentConfig& config);

/// Resolved config as a canonical JSON object, suitable for manifests.
std::string config_json(const ExperimentConfig& config);

/// Inverse of config_json. Accepts either a bare config object or a full
/// run manifest (anything with a "config" key is unwrapped). Missing fields
/// keep their defaults; unknown keys fail InvalidConfig so typos surface.
ExperimentConfig config_from_json(const std::string& text);

/// Confusion counts with crypto (label 1) positive, plus the per-repeat
/// trail. Single-run reports carry one entry; aggregated reports pool the
/// counts over repeats and average the per-repeat metrics.
struct MetricsReport {
  long long tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  double f1 = 0.0;
  std::vector<double> repeat_accuracy;
  std::vector<double> repeat_f1;
  std::vector<double> repeat_train_accuracy;  // filled by control runs
  double accuracy_mean = 0.0, accuracy_sd = 0.0;
  double f1_mean = 0.0, f1_sd = 0.0;
  double train_accuracy_mean = 0.0;  // 0 unless repeat_train_accuracy set
};

/// Scores one prediction vector. F1 = 2PR/(P+R), defined as 0 when both
/// precision and recall vanish.
MetricsReport metrics(const std::vector<int>& predictions, const std::vector<int>& labels);

/// Packs samples into a [n, ch, len] float set with channel-major rows, the
/// model input layout. Normalize first; this narrows to float.
LabeledSet pack_samples(const std::vector<Sample>& samples);

/// Hard 0/1 predictions over a packed split (p >= 0.5), eval mode.
std::vector<int> predict_labels(const Model& model, const LabeledSet& data, int batch_size = 128);

/// JSON-lines trail of a run: one record per repeat plus a summary record.
struct RunRecords {
  std::vector<std::string> lines;
  void save(const std::string& path) const;
};

/// Full pipeline (segment -> representation -> optional balance -> split ->
/// normalize -> train -> evaluate), `repeats` times with seeds
/// seed+0..seed+repeats-1, aggregated.
MetricsReport run_experiment(const ExperimentConfig& config,
                             const std::vector<AlignedSeries>& data,
                             RunRecords* records = nullptr);

/// Random-label control: keeps only assets of class `cls`, assigns half of
/// them pseudo-label 0 and half 1 per repeat (at asset level), then runs the
/// run_experiment pipeline. Records train accuracy alongside test accuracy.
MetricsReport run_control(AssetClass cls, const ExperimentConfig& config,
                          const std::vector<AlignedSeries>& data,
                          RunRecords* records = nullptr);

struct RobustnessRow {
  std::string variant;  // "baseline" or the variant string as given
  std::string arch;     // resolved architecture
  MetricsReport report;
};

/// Trains the baseline and each variant on one fixed split (config.seed).
/// A variant is either a dash-separated hidden-width list ("32-32-64") or a
/// full architecture string (anything containing parentheses).
std::vector<RobustnessRow> run_robustness(const ExperimentConfig& config,
                                          const std::vector<std::string>& variants,
                                          const std::vector<AlignedSeries>& data,
                                          RunRecords* records = nullptr);

/// CSV `class,value,cdf`: per class, values ascending with empirical CDF
/// ordinates k/n (k = 1..n). Classes emit in name order.
void export_cdf(const std::string& path, const std::string& feature_name,
                const std::map<std::string, std::vector<double>>& per_class);

}  // namespace tscx
