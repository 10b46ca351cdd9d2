#include "tscx/classical.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tscx/error.hpp"
#include "tscx/rng.hpp"

namespace tscx {

std::string to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::LR: return "LR";
    case ClassifierKind::RF: return "RF";
    case ClassifierKind::SVM: return "SVM";
    case ClassifierKind::KNN: return "KNN";
    default: return "GB";
  }
}

ClassifierKind classifier_from(const std::string& s) {
  if (s == "LR") return ClassifierKind::LR;
  if (s == "RF") return ClassifierKind::RF;
  if (s == "SVM") return ClassifierKind::SVM;
  if (s == "KNN") return ClassifierKind::KNN;
  if (s == "GB") return ClassifierKind::GB;
  fail(Errc::InvalidConfig, "unknown classifier '" + s + "' (LR|RF|SVM|KNN|GB)");
}

namespace {

using detail::TreeNode;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<std::vector<double>> standardized(const FeatureMatrix& m,
                                              const std::vector<double>& mu,
                                              const std::vector<double>& sigma) {
  std::vector<std::vector<double>> out(m.rows.size());
  for (size_t i = 0; i < m.rows.size(); ++i) {
    if (m.rows[i].size() != mu.size())
      fail(Errc::LengthMismatch, "feature row has " + std::to_string(m.rows[i].size()) +
                                     " columns, model expects " + std::to_string(mu.size()));
    out[i].resize(mu.size());
    for (size_t j = 0; j < mu.size(); ++j) out[i][j] = (m.rows[i][j] - mu[j]) / sigma[j];
  }
  return out;
}

double tree_eval(const std::vector<TreeNode>& tree, const std::vector<double>& x) {
  int at = 0;
  while (tree[at].feat >= 0) at = x[tree[at].feat] <= tree[at].thr ? tree[at].left : tree[at].right;
  return tree[at].value;
}

// One candidate split: threshold on a feature, scored by weighted impurity
// decrease (Gini for class targets, variance otherwise).
struct BestSplit {
  int feat = -1;
  double thr = 0;
  double decrease = 0;
};

double gini_of(double pos, double n) {
  if (n <= 0) return 0;
  double p = pos / n;
  return 1.0 - p * p - (1.0 - p) * (1.0 - p);
}

BestSplit best_gini_split(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                          const std::vector<int>& idx, const std::vector<int>& feats) {
  BestSplit best;
  const double n = static_cast<double>(idx.size());
  double pos = 0;
  for (int i : idx) pos += y[i];
  const double parent = gini_of(pos, n);
  std::vector<std::pair<double, int>> v(idx.size());
  for (int f : feats) {
    for (size_t k = 0; k < idx.size(); ++k) v[k] = {x[idx[k]][f], y[idx[k]]};
    std::sort(v.begin(), v.end());
    double lpos = 0;
    for (size_t k = 1; k < v.size(); ++k) {
      lpos += v[k - 1].second;
      if (v[k].first == v[k - 1].first) continue;
      double nl = static_cast<double>(k), nr = n - nl;
      double dec = parent - (nl / n) * gini_of(lpos, nl) - (nr / n) * gini_of(pos - lpos, nr);
      if (dec > best.decrease + 1e-15) {
        best = {f, 0.5 * (v[k].first + v[k - 1].first), dec};
      }
    }
  }
  return best;
}

BestSplit best_variance_split(const std::vector<std::vector<double>>& x,
                              const std::vector<double>& r, const std::vector<int>& idx,
                              const std::vector<int>& feats) {
  BestSplit best;
  const double n = static_cast<double>(idx.size());
  double sum = 0, ss = 0;
  for (int i : idx) {
    sum += r[i];
    ss += r[i] * r[i];
  }
  const double parent = ss - sum * sum / n;  // n * variance
  std::vector<std::pair<double, double>> v(idx.size());
  for (int f : feats) {
    for (size_t k = 0; k < idx.size(); ++k) v[k] = {x[idx[k]][f], r[idx[k]]};
    std::sort(v.begin(), v.end());
    double lsum = 0, lss = 0;
    for (size_t k = 1; k < v.size(); ++k) {
      lsum += v[k - 1].second;
      lss += v[k - 1].second * v[k - 1].second;
      if (v[k].first == v[k - 1].first) continue;
      double nl = static_cast<double>(k), nr = n - nl;
      double left = lss - lsum * lsum / nl;
      double right = (ss - lss) - (sum - lsum) * (sum - lsum) / nr;
      double dec = parent - left - right;  // total squared-error reduction
      if (dec > best.decrease + 1e-15) {
        best = {f, 0.5 * (v[k].first + v[k - 1].first), dec};
      }
    }
  }
  return best;
}

struct ForestGrower {
  const std::vector<std::vector<double>>& x;
  const std::vector<int>& y;
  int max_depth;
  int mtry;
  Rng& rng;
  std::vector<double>& importance;
  double n_total;

  int grow(std::vector<TreeNode>& tree, std::vector<int> idx, int depth) {
    double pos = 0;
    for (int i : idx) pos += y[i];
    const double n = static_cast<double>(idx.size());
    TreeNode node;
    node.value = pos >= n - pos ? 1.0 : 0.0;
    int at = static_cast<int>(tree.size());
    tree.push_back(node);
    if (depth >= max_depth || idx.size() < 2 || pos == 0 || pos == n) return at;

    auto sampled = rng.sample_without_replacement(x[0].size(), mtry);
    std::vector<int> feats(sampled.begin(), sampled.end());
    std::sort(feats.begin(), feats.end());
    BestSplit s = best_gini_split(x, y, idx, feats);
    if (s.feat < 0) return at;
    importance[s.feat] += (n / n_total) * s.decrease;

    std::vector<int> lo, hi;
    for (int i : idx)
      (x[i][s.feat] <= s.thr ? lo : hi).push_back(i);
    tree[at].feat = s.feat;
    tree[at].thr = s.thr;
    int l = grow(tree, std::move(lo), depth + 1);
    int r = grow(tree, std::move(hi), depth + 1);
    tree[at].left = l;
    tree[at].right = r;
    return at;
  }
};

struct GbGrower {
  const std::vector<std::vector<double>>& x;
  const std::vector<double>& resid;
  const std::vector<double>& hess;
  int max_depth;
  std::vector<int> all_feats;
  std::vector<double>& importance;
  double n_total;

  int grow(std::vector<TreeNode>& tree, std::vector<int> idx, int depth) {
    TreeNode node;
    double rs = 0, hs = 0;
    for (int i : idx) {
      rs += resid[i];
      hs += hess[i];
    }
    node.value = std::clamp(hs > 0 ? rs / hs : 0.0, -4.0, 4.0);  // Newton step
    int at = static_cast<int>(tree.size());
    tree.push_back(node);
    if (depth >= max_depth || idx.size() < 2) return at;

    BestSplit s = best_variance_split(x, resid, idx, all_feats);
    if (s.feat < 0) return at;
    importance[s.feat] += s.decrease / n_total;

    std::vector<int> lo, hi;
    for (int i : idx)
      (x[i][s.feat] <= s.thr ? lo : hi).push_back(i);
    tree[at].feat = s.feat;
    tree[at].thr = s.thr;
    int l = grow(tree, std::move(lo), depth + 1);
    int r = grow(tree, std::move(hi), depth + 1);
    tree[at].left = l;
    tree[at].right = r;
    return at;
  }
};

}  // namespace

ClassicalModel fit(ClassifierKind kind, const FeatureMatrix& train, const ClassicalParams& params,
                   uint64_t seed) {
  if (train.rows.empty()) fail(Errc::EmptyTrainSet, "fit: no training rows");
  const size_t n = train.rows.size(), d = train.rows[0].size();
  if (d == 0) fail(Errc::EmptyTrainSet, "fit: zero-width feature rows");
  if (train.labels.size() != n)
    fail(Errc::LengthMismatch, "fit: labels/rows length mismatch");
  for (const auto& row : train.rows) {
    if (row.size() != d) fail(Errc::LengthMismatch, "fit: ragged feature matrix");
    for (double v : row)
      if (!std::isfinite(v)) fail(Errc::InvalidConfig, "fit: non-finite feature value");
  }

  ClassicalModel m;
  m.kind_ = kind;
  m.params_ = params;
  m.dim_ = d;
  m.mu_.assign(d, 0.0);
  m.sigma_.assign(d, 0.0);
  for (const auto& row : train.rows)
    for (size_t j = 0; j < d; ++j) m.mu_[j] += row[j];
  for (size_t j = 0; j < d; ++j) m.mu_[j] /= static_cast<double>(n);
  for (const auto& row : train.rows)
    for (size_t j = 0; j < d; ++j) {
      double dev = row[j] - m.mu_[j];
      m.sigma_[j] += dev * dev;
    }
  for (size_t j = 0; j < d; ++j) {
    m.sigma_[j] = std::sqrt(m.sigma_[j] / static_cast<double>(n));
    if (m.sigma_[j] == 0.0) m.sigma_[j] = 1.0;
  }

  size_t pos = 0;
  for (int y : train.labels) pos += y ? 1 : 0;
  if (pos == 0 || pos == n) {
    m.degenerate_ = true;
    m.const_label_ = pos == 0 ? 0 : 1;
    return m;
  }

  auto x = standardized(train, m.mu_, m.sigma_);
  const auto& y = train.labels;

  switch (kind) {
    case ClassifierKind::LR: {
      m.w_.assign(d, 0.0);
      m.b_ = 0.0;
      for (int epoch = 0; epoch < params.epochs; ++epoch) {
        std::vector<double> gw(d, 0.0);
        double gb = 0.0;
        for (size_t i = 0; i < n; ++i) {
          double z = m.b_;
          for (size_t j = 0; j < d; ++j) z += m.w_[j] * x[i][j];
          double e = sigmoid(z) - y[i];
          for (size_t j = 0; j < d; ++j) gw[j] += e * x[i][j];
          gb += e;
        }
        for (size_t j = 0; j < d; ++j)
          m.w_[j] -= params.lr * (gw[j] / static_cast<double>(n) + params.l2 * m.w_[j]);
        m.b_ -= params.lr * gb / static_cast<double>(n);
      }
      break;
    }
    case ClassifierKind::SVM: {
      m.w_.assign(d, 0.0);
      m.b_ = 0.0;
      for (int epoch = 0; epoch < params.epochs; ++epoch) {
        std::vector<double> gw(d, 0.0);
        double gb = 0.0;
        for (size_t i = 0; i < n; ++i) {
          double yi = y[i] ? 1.0 : -1.0;
          double z = m.b_;
          for (size_t j = 0; j < d; ++j) z += m.w_[j] * x[i][j];
          if (yi * z < 1.0) {  // hinge subgradient
            for (size_t j = 0; j < d; ++j) gw[j] -= yi * x[i][j];
            gb -= yi;
          }
        }
        for (size_t j = 0; j < d; ++j)
          m.w_[j] -= params.lr * (gw[j] / static_cast<double>(n) + params.l2 * m.w_[j]);
        m.b_ -= params.lr * gb / static_cast<double>(n);
      }
      break;
    }
    case ClassifierKind::KNN: {
      m.knn_x_ = std::move(x);
      m.knn_y_ = y;
      break;
    }
    case ClassifierKind::RF: {
      Rng rng(seed);
      m.importance_.assign(d, 0.0);
      int mtry = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(d))));
      ForestGrower grower{x, y, params.max_depth, mtry, rng, m.importance_,
                          static_cast<double>(n)};
      for (int t = 0; t < params.n_trees; ++t) {
        std::vector<int> boot(n);
        for (auto& i : boot) i = static_cast<int>(rng.below(n));
        std::vector<TreeNode> tree;
        grower.grow(tree, std::move(boot), 0);
        m.trees_.push_back(std::move(tree));
      }
      double total = std::accumulate(m.importance_.begin(), m.importance_.end(), 0.0);
      if (total > 0)
        for (auto& v : m.importance_) v /= total;
      break;
    }
    case ClassifierKind::GB: {
      m.importance_.assign(d, 0.0);
      double pbar = std::clamp(static_cast<double>(pos) / n, 1e-6, 1.0 - 1e-6);
      m.b_ = std::log(pbar / (1.0 - pbar));
      std::vector<double> f(n, m.b_), resid(n), hess(n);
      std::vector<int> all(d);
      std::iota(all.begin(), all.end(), 0);
      std::vector<int> root(n);
      std::iota(root.begin(), root.end(), 0);
      GbGrower grower{x, resid, hess, params.gb_depth, all, m.importance_,
                      static_cast<double>(n)};
      for (int round = 0; round < params.gb_rounds; ++round) {
        for (size_t i = 0; i < n; ++i) {
          double p = sigmoid(f[i]);
          resid[i] = y[i] - p;
          hess[i] = std::max(p * (1.0 - p), 1e-9);
        }
        std::vector<TreeNode> tree;
        grower.grow(tree, root, 0);
        for (size_t i = 0; i < n; ++i) f[i] += params.gb_lr * tree_eval(tree, x[i]);
        m.trees_.push_back(std::move(tree));
      }
      double total = std::accumulate(m.importance_.begin(), m.importance_.end(), 0.0);
      if (total > 0)
        for (auto& v : m.importance_) v /= total;
      break;
    }
  }
  return m;
}

std::vector<double> ClassicalModel::decision(const FeatureMatrix& mtx) const {
  std::vector<double> out;
  out.reserve(mtx.rows.size());
  if (degenerate_) {
    out.assign(mtx.rows.size(), kind_ == ClassifierKind::SVM
                                    ? (const_label_ ? 1.0 : -1.0)
                                    : static_cast<double>(const_label_));
    return out;
  }
  auto x = standardized(mtx, mu_, sigma_);
  switch (kind_) {
    case ClassifierKind::LR:
    case ClassifierKind::SVM:
      for (const auto& row : x) {
        double z = b_;
        for (size_t j = 0; j < dim_; ++j) z += w_[j] * row[j];
        out.push_back(kind_ == ClassifierKind::LR ? sigmoid(z) : z);
      }
      break;
    case ClassifierKind::KNN: {
      const size_t k = static_cast<size_t>(std::max(1, params_.k));
      for (const auto& row : x) {
        std::vector<std::pair<double, size_t>> dist(knn_x_.size());
        for (size_t i = 0; i < knn_x_.size(); ++i) {
          double s = 0;
          for (size_t j = 0; j < dim_; ++j) {
            double dv = row[j] - knn_x_[i][j];
            s += dv * dv;
          }
          dist[i] = {s, i};  // index keeps sorting stable across ties
        }
        std::sort(dist.begin(), dist.end());
        size_t take = std::min(k, dist.size());
        double kth = dist[take - 1].first;
        double votes = 0, total = 0;
        for (const auto& [ds, i] : dist) {
          if (total >= take && ds > kth) break;  // include distance ties at the rim
          votes += knn_y_[i];
          total += 1;
        }
        double frac = votes / total;
        if (frac == 0.5) frac = knn_y_[dist[0].second] ? 0.75 : 0.25;  // nearest breaks ties
        out.push_back(frac);
      }
      break;
    }
    case ClassifierKind::RF:
      for (const auto& row : x) {
        double v = 0;
        for (const auto& t : trees_) v += tree_eval(t, row);
        out.push_back(v / static_cast<double>(trees_.size()));
      }
      break;
    case ClassifierKind::GB:
      for (const auto& row : x) {
        double f = b_;
        for (const auto& t : trees_) f += params_.gb_lr * tree_eval(t, row);
        out.push_back(sigmoid(f));
      }
      break;
  }
  return out;
}

std::vector<int> ClassicalModel::predict(const FeatureMatrix& mtx) const {
  auto scores = decision(mtx);
  std::vector<int> out(scores.size());
  const double cut = kind_ == ClassifierKind::SVM ? 0.0 : 0.5;
  for (size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= cut ? 1 : 0;
  return out;
}

std::vector<double> ClassicalModel::importances() const {
  if (kind_ != ClassifierKind::RF && kind_ != ClassifierKind::GB)
    fail(Errc::UnsupportedKind,
         "feature importance is defined for RF and GB, not " + to_string(kind_));
  if (degenerate_) return std::vector<double>(dim_, 0.0);
  return importance_;
}

std::vector<size_t> feature_importance(const ClassicalModel& model) {
  auto imp = model.importances();
  std::vector<size_t> order(imp.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return imp[a] > imp[b]; });
  return order;
}

void ClassicalModel::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) fail(Errc::IoError, "save: cannot write " + path);
  f << "tscx-classical 1 kind=" << to_string(kind_) << " dim=" << dim_
    << " degenerate=" << (degenerate_ ? 1 : 0) << "\n";
  auto row = [&](const char* name, const std::vector<double>& v) {
    f << name;
    for (double x : v) f << ' ' << x;
    f << "\n";
  };
  row("mu", mu_);
  row("sigma", sigma_);
  if (kind_ == ClassifierKind::LR || kind_ == ClassifierKind::SVM) {
    row("w", w_);
    f << "b " << b_ << "\n";
  } else if (kind_ == ClassifierKind::KNN) {
    f << "k " << params_.k << "\ntrain_points " << knn_x_.size() << "\n";
  } else {
    if (kind_ == ClassifierKind::GB) f << "prior " << b_ << " lr " << params_.gb_lr << "\n";
    f << "trees " << trees_.size() << "\n";
    for (size_t t = 0; t < trees_.size(); ++t) {
      f << "tree " << t << " nodes " << trees_[t].size() << "\n";
      for (const auto& nd : trees_[t])
        f << nd.feat << ' ' << nd.thr << ' ' << nd.left << ' ' << nd.right << ' ' << nd.value
          << "\n";
    }
  }
  f.close();
  if (!f) fail(Errc::IoError, "save: write failed for " + path);
}

FitPredictResult fit_predict(ClassifierKind kind, const FeatureMatrix& train,
                             const FeatureMatrix& test, const ClassicalParams& params,
                             uint64_t seed) {
  ClassicalModel m = fit(kind, train, params, seed);
  FitPredictResult r;
  r.scores = m.decision(test);
  r.predicted = m.predict(test);
  r.degenerate = m.degenerate();
  return r;
}

}  // namespace tscx
