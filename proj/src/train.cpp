#include "tscx/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "tscx/error.hpp"
#include "tscx/rng.hpp"

namespace tscx {

std::string to_string(Loss kind) {
  switch (kind) {
    case Loss::BCE: return "bce";
    case Loss::MSE: return "mse";
    case Loss::Focal: return "focal";
  }
  return "?";
}

Loss loss_from(const std::string& s) {
  if (s == "bce") return Loss::BCE;
  if (s == "mse") return Loss::MSE;
  if (s == "focal") return Loss::Focal;
  fail(Errc::InvalidConfig, "unknown loss '" + s + "'");
}

double loss_value(Loss kind, double p, double y, double alpha, double gamma) {
  if (kind == Loss::MSE) {
    double d = p - y;
    return d * d;
  }
  p = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
  if (kind == Loss::BCE) return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  double pt = y > 0.5 ? p : 1.0 - p;
  double at = y > 0.5 ? alpha : 1.0 - alpha;
  return -at * std::pow(1.0 - pt, gamma) * std::log(pt);
}

void adam_step(std::vector<float>& theta, const std::vector<float>& g, std::vector<float>& m,
               std::vector<float>& v, int64_t t, float lr, float beta1, float beta2, float eps) {
  if (theta.size() != g.size() || theta.size() != m.size() || theta.size() != v.size())
    fail(Errc::ShapeMismatch, "adam_step: buffer sizes disagree");
  const double b1 = beta1, b2 = beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (size_t i = 0; i < theta.size(); ++i) {
    double gi = g[i];
    double mi = b1 * m[i] + (1.0 - b1) * gi;
    double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    double mhat = mi / corr1;
    double vhat = vi / corr2;
    theta[i] = static_cast<float>(theta[i] - static_cast<double>(lr) * mhat / (std::sqrt(vhat) + eps));
  }
}

AdamState AdamState::for_model(const Model& model) {
  AdamState st;
  for (const auto& pb : model.params()) {
    st.m.emplace_back(pb.data->size(), 0.0f);
    st.v.emplace_back(pb.data->size(), 0.0f);
  }
  return st;
}

void History::save_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) fail(Errc::IoError, "cannot write " + path);
  f << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char buf[256];
  for (size_t i = 0; i < epochs.size(); ++i) {
    const auto& e = epochs[i];
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g\n", i + 1, e.train_loss, e.train_acc,
                  e.val_loss, e.val_acc);
    f << buf;
  }
  if (!f) fail(Errc::IoError, "short write to " + path);
}

namespace {

Tensor loss_node(Tape& t, const Tensor& p, const std::vector<float>& y, const TrainConfig& c) {
  switch (c.loss) {
    case Loss::BCE: return t.bce_loss(p, y);
    case Loss::MSE: return t.mse_loss(p, y);
    case Loss::Focal: return t.focal_loss(p, y, c.focal_alpha, c.focal_gamma);
  }
  fail(Errc::InvalidConfig, "bad loss kind");
}

// Gathers rows `idx[lo..hi)` into a [B, ch, len] constant.
Tensor gather_batch(const LabeledSet& d, const std::vector<int>& idx, size_t lo, size_t hi,
                    std::vector<float>& yb) {
  const size_t row = static_cast<size_t>(d.ch) * d.len;
  std::vector<float> xb((hi - lo) * row);
  yb.resize(hi - lo);
  for (size_t i = lo; i < hi; ++i) {
    std::copy_n(d.x.begin() + idx[i] * row, row, xb.begin() + (i - lo) * row);
    yb[i - lo] = d.y[idx[i]];
  }
  return constant(std::move(xb), {static_cast<int>(hi - lo), d.ch, d.len});
}

void check_set(const LabeledSet& d, const char* which) {
  if (d.n < 1) fail(Errc::TooFewSamples, std::string(which) + " split is empty");
  if (d.x.size() != static_cast<size_t>(d.n) * d.ch * d.len ||
      d.y.size() != static_cast<size_t>(d.n))
    fail(Errc::ShapeMismatch, std::string(which) + " split buffers disagree with n*ch*len");
}

}  // namespace

EvalResult evaluate(const Model& model, const LabeledSet& data, Loss kind, int batch_size,
                    float focal_alpha, float focal_gamma) {
  check_set(data, "eval");
  if (batch_size < 1) fail(Errc::InvalidConfig, "evaluate: batch_size must be >= 1");
  TrainConfig lc;
  lc.loss = kind;
  lc.focal_alpha = focal_alpha;
  lc.focal_gamma = focal_gamma;
  std::vector<int> idx(data.n);
  for (int i = 0; i < data.n; ++i) idx[i] = i;
  double loss_sum = 0.0;
  long correct = 0;
  for (size_t lo = 0; lo < idx.size(); lo += batch_size) {
    size_t hi = std::min(idx.size(), lo + batch_size);
    std::vector<float> yb;
    Tape t;
    Tensor xb = gather_batch(data, idx, lo, hi, yb);
    Tensor p = model.forward(t, xb);
    for (size_t i = 0; i < yb.size(); ++i) {
      double pi = (*p.data)[i];
      loss_sum += loss_value(kind, pi, yb[i], focal_alpha, focal_gamma);
      correct += ((pi >= 0.5) == (yb[i] >= 0.5)) ? 1 : 0;
    }
  }
  return {loss_sum / data.n, static_cast<double>(correct) / data.n};
}

History fit(Model& model, const LabeledSet& train, const LabeledSet& val,
            const TrainConfig& config) {
  if (config.learning_rate <= 0.0f) fail(Errc::InvalidConfig, "fit: learning_rate must be > 0");
  if (config.batch_size < 1) fail(Errc::InvalidConfig, "fit: batch_size must be >= 1");
  if (config.epochs < 0) fail(Errc::InvalidConfig, "fit: epochs must be >= 0");
  check_set(train, "train");
  check_set(val, "val");
  if (train.ch != model.input_ch() || train.len != model.input_len())
    fail(Errc::ShapeMismatch, "fit: training data does not match the model input shape");

  History hist;
  if (config.epochs == 0) return hist;

  Rng rng(config.seed);
  AdamState adam = AdamState::for_model(model);
  auto& params = model.params();

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::vector<float>> best_params;
  int stale = 0;

  std::vector<int> idx(train.n);
  for (int i = 0; i < train.n; ++i) idx[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(idx);
    double loss_sum = 0.0;
    long correct = 0;
    for (size_t lo = 0; lo < idx.size(); lo += config.batch_size) {
      size_t hi = std::min(idx.size(), lo + static_cast<size_t>(config.batch_size));
      std::vector<float> yb;
      Tape t;
      Tensor xb = gather_batch(train, idx, lo, hi, yb);
      std::vector<Tensor> bound;
      Tensor p = model.forward(t, xb, true, &rng, config.dropout, &bound);
      Tensor loss = loss_node(t, p, yb, config);
      double lv = loss.scalar();
      if (!std::isfinite(lv))
        fail(Errc::DivergedLoss, "epoch " + std::to_string(epoch + 1) + ", batch at sample " +
                                     std::to_string(lo) + ": loss = " + std::to_string(lv));
      loss_sum += lv * static_cast<double>(hi - lo);
      for (size_t i = 0; i < yb.size(); ++i)
        correct += (((*p.data)[i] >= 0.5f) == (yb[i] >= 0.5f)) ? 1 : 0;

      t.backward(loss);
      ++adam.t;
      for (size_t b = 0; b < params.size(); ++b)
        adam_step(*params[b].data, t.grad(bound[b]), adam.m[b], adam.v[b], adam.t,
                  config.learning_rate, config.beta1, config.beta2, config.adam_eps);
    }

    EvalResult ev = evaluate(model, val, config.loss, config.batch_size, config.focal_alpha,
                             config.focal_gamma);
    if (!std::isfinite(ev.loss))
      fail(Errc::DivergedLoss, "epoch " + std::to_string(epoch + 1) + ": validation loss diverged");
    EpochStats st{loss_sum / train.n, static_cast<double>(correct) / train.n, ev.loss, ev.acc};
    hist.epochs.push_back(st);

    if (ev.loss < best_val) {
      best_val = ev.loss;
      hist.best_epoch = epoch;
      best_params.clear();
      for (const auto& pb : params) best_params.push_back(*pb.data);
      stale = 0;
    } else if (config.patience > 0 && ++stale >= config.patience) {
      break;
    }
  }

  for (size_t b = 0; b < params.size(); ++b) *params[b].data = best_params[b];
  return hist;
}

namespace {

void apply_hparam(TrainConfig& c, const std::string& key, double v) {
  if (key == "learning_rate") c.learning_rate = static_cast<float>(v);
  else if (key == "batch_size") c.batch_size = static_cast<int>(v);
  else if (key == "epochs") c.epochs = static_cast<int>(v);
  else if (key == "dropout") c.dropout = static_cast<float>(v);
  else if (key == "focal_alpha") c.focal_alpha = static_cast<float>(v);
  else if (key == "focal_gamma") c.focal_gamma = static_cast<float>(v);
  else fail(Errc::InvalidConfig, "grid_search: unknown hyperparameter '" + key + "'");
}

}  // namespace

GridResult grid_search(ModelName name, const BuildOptions& bopt, const LabeledSet& train,
                       const LabeledSet& val, const TrainConfig& base,
                       const std::map<std::string, std::vector<double>>& grid) {
  if (grid.empty()) fail(Errc::InvalidConfig, "grid_search: empty grid");
  for (const auto& [k, vs] : grid) {
    if (vs.empty()) fail(Errc::InvalidConfig, "grid_search: no values for '" + k + "'");
    TrainConfig probe = base;
    apply_hparam(probe, k, vs[0]);  // validates the key up front
  }

  std::vector<std::string> keys;
  for (const auto& [k, vs] : grid) keys.push_back(k);

  GridResult out;
  std::vector<size_t> at(keys.size(), 0);
  for (;;) {
    TrainConfig c = base;
    for (size_t i = 0; i < keys.size(); ++i) apply_hparam(c, keys[i], grid.at(keys[i])[at[i]]);

    GridCell cell;
    cell.config = c;
    try {
      Model m = build_model(name, train.len, train.ch, base.seed, bopt);
      History h = fit(m, train, val, c);
      if (h.best_epoch >= 0) {
        cell.val_acc = h.epochs[h.best_epoch].val_acc;
        cell.val_loss = h.epochs[h.best_epoch].val_loss;
      }
    } catch (const Error& e) {
      if (e.code() != Errc::DivergedLoss) throw;
      cell.diverged = true;
      cell.val_acc = 0.0;
      cell.val_loss = std::numeric_limits<double>::infinity();
    }
    out.cells.push_back(std::move(cell));

    // odometer over the sorted keys
    size_t k = keys.size();
    while (k > 0) {
      if (++at[k - 1] < grid.at(keys[k - 1]).size()) break;
      at[k - 1] = 0;
      --k;
    }
    if (k == 0) break;
  }

  for (size_t i = 0; i < out.cells.size(); ++i) {
    if (out.best_index < 0) {
      out.best_index = static_cast<int>(i);
      continue;
    }
    const auto& best = out.cells[out.best_index];
    const auto& c = out.cells[i];
    if (c.val_acc > best.val_acc ||
        (c.val_acc == best.val_acc && c.val_loss < best.val_loss))
      out.best_index = static_cast<int>(i);
  }
  out.best = out.cells[out.best_index].config;
  return out;
}

}  // namespace tscx
