#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tscx/features.hpp"

namespace tscx {

enum class ClassifierKind { LR, RF, SVM, KNN, GB };

std::string to_string(ClassifierKind k);
ClassifierKind classifier_from(const std::string& s);

struct ClassicalParams {
  // gradient-descent models (LR, SVM)
  double l2 = 1e-3;
  int epochs = 500;
  double lr = 0.1;
  // random forest
  int n_trees = 100;
  int max_depth = 12;
  // gradient boosting
  int gb_rounds = 200;
  int gb_depth = 3;
  double gb_lr = 0.1;
  // nearest neighbors
  int k = 5;
};

namespace detail {
struct TreeNode {
  int feat = -1;  // -1 marks a leaf
  double thr = 0;
  int left = -1, right = -1;
  double value = 0;  // leaf: vote fraction (RF) or additive step (GB)
};
}  // namespace detail

/// A fitted feature-space classifier. Standardization statistics are learned
/// from the training matrix inside fit(), so callers can hand over raw
/// feature rows for both fitting and prediction.
class ClassicalModel {
 public:
  ClassifierKind kind() const { return kind_; }
  bool degenerate() const { return degenerate_; }

  /// Decision scores: probability-like in [0,1] for every kind except SVM,
  /// which reports the raw margin.
  std::vector<double> decision(const FeatureMatrix& m) const;
  std::vector<int> predict(const FeatureMatrix& m) const;

  /// Per-column mean impurity decrease (RF/GB). UnsupportedKind otherwise.
  std::vector<double> importances() const;

  /// Text manifest of the fitted model (weights or tree structures).
  void save(const std::string& path) const;

 private:
  friend ClassicalModel fit(ClassifierKind, const FeatureMatrix&, const ClassicalParams&,
                            uint64_t);
  ClassifierKind kind_ = ClassifierKind::LR;
  ClassicalParams params_;
  bool degenerate_ = false;
  int const_label_ = 0;
  size_t dim_ = 0;
  std::vector<double> mu_, sigma_;  // standardization, learned on train
  std::vector<double> w_;           // LR/SVM weights
  double b_ = 0;                    // LR/SVM bias; GB prior
  std::vector<std::vector<detail::TreeNode>> trees_;  // RF/GB
  std::vector<double> importance_;                    // RF/GB, per column
  std::vector<std::vector<double>> knn_x_;            // standardized train rows
  std::vector<int> knn_y_;
};

ClassicalModel fit(ClassifierKind kind, const FeatureMatrix& train,
                   const ClassicalParams& params = {}, uint64_t seed = 0);

struct FitPredictResult {
  std::vector<int> predicted;
  std::vector<double> scores;
  bool degenerate = false;
};

FitPredictResult fit_predict(ClassifierKind kind, const FeatureMatrix& train,
                             const FeatureMatrix& test, const ClassicalParams& params = {},
                             uint64_t seed = 0);

/// Column indices ranked by decreasing importance; ties break toward the
/// lower index.
std::vector<size_t> feature_importance(const ClassicalModel& model);

}  // namespace tscx
