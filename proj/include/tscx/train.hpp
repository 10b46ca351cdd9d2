#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tscx/archdsl.hpp"

namespace tscx {

enum class Loss { BCE, MSE, Focal };

std::string to_string(Loss kind);
Loss loss_from(const std::string& s);

/// Scalar reference loss on one (p, y) pair; p is clamped to
/// [1e-7, 1-1e-7] before BCE/Focal logs.
double loss_value(Loss kind, double p, double y, double alpha = 0.25, double gamma = 2.0);

struct TrainConfig {
  float learning_rate = 0.001f;
  Loss loss = Loss::BCE;
  int batch_size = 128;
  int epochs = 500;
  float dropout = 0.2f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float adam_eps = 1e-8f;
  float focal_alpha = 0.25f;
  float focal_gamma = 2.0f;
  uint64_t seed = 0;
  int patience = 0;  // epochs without val-loss improvement before stopping; 0 = off
};

/// One Adam moment update on a single parameter blob. `t` is the 1-based
/// step count after incrementing.
void adam_step(std::vector<float>& theta, const std::vector<float>& g, std::vector<float>& m,
               std::vector<float>& v, int64_t t, float lr, float beta1 = 0.9f,
               float beta2 = 0.999f, float eps = 1e-8f);

struct AdamState {
  std::vector<std::vector<float>> m, v;
  int64_t t = 0;
  static AdamState for_model(const Model& model);
};

/// One split of supervised data; `x` holds n rows of ch*len floats.
struct LabeledSet {
  std::vector<float> x;
  std::vector<float> y;  // 0/1
  int n = 0;
  int ch = 1;
  int len = 0;
};

struct EpochStats {
  double train_loss, train_acc, val_loss, val_acc;
};

struct History {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;  // 0-based index; -1 when no epoch ran
  void save_csv(const std::string& path) const;
};

struct EvalResult {
  double loss, acc;
};

/// Eval-mode loss/accuracy over a split (prediction = p >= 0.5).
EvalResult evaluate(const Model& model, const LabeledSet& data, Loss kind, int batch_size = 128,
                    float focal_alpha = 0.25f, float focal_gamma = 2.0f);

/// Mini-batch Adam training. Batches reshuffle each epoch from the seeded
/// RNG, dropout runs only on training passes, and the parameters left in
/// `model` are those of the best-validation-loss epoch.
History fit(Model& model, const LabeledSet& train, const LabeledSet& val,
            const TrainConfig& config);

struct GridCell {
  TrainConfig config;
  double val_acc = 0.0;
  double val_loss = 0.0;
  bool diverged = false;
};

struct GridResult {
  TrainConfig best;
  int best_index = -1;
  std::vector<GridCell> cells;
};

/// Exhaustive Cartesian sweep. Keys: learning_rate, batch_size, epochs,
/// dropout, focal_alpha, focal_gamma. Best cell = highest validation
/// accuracy, ties by lower validation loss, then by enumeration order.
/// Cells that diverge score 0. Each cell trains a fresh model seeded
/// from `base.seed`.
GridResult grid_search(ModelName name, const BuildOptions& bopt, const LabeledSet& train,
                       const LabeledSet& val, const TrainConfig& base,
                       const std::map<std::string, std::vector<double>>& grid);

}  // namespace tscx
