#include "tscx/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "tscx/error.hpp"

namespace tscx {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

float Tensor::scalar() const {
  if (numel() != 1) fail(Errc::ShapeMismatch, "scalar() on shape " + shape_str(shape));
  return (*data)[0];
}

Tensor constant(std::vector<float> v, Shape shape) {
  return constant(std::make_shared<std::vector<float>>(std::move(v)), std::move(shape));
}

Tensor constant(std::shared_ptr<std::vector<float>> v, Shape shape) {
  if (static_cast<int64_t>(v->size()) != shape_numel(shape))
    fail(Errc::ShapeMismatch,
         "constant: " + std::to_string(v->size()) + " values for shape " + shape_str(shape));
  return Tensor{std::move(v), std::move(shape), -1};
}

Tensor zeros(Shape shape) {
  std::vector<float> v(shape_numel(shape), 0.0f);
  return constant(std::move(v), std::move(shape));
}

namespace {

void check_shape_positive(const Shape& s) {
  if (s.empty()) fail(Errc::ShapeMismatch, "empty shape");
  for (int e : s)
    if (e <= 0) fail(Errc::ShapeMismatch, "non-positive extent in " + shape_str(s));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape)
    fail(Errc::ShapeMismatch,
         std::string(op) + ": " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

constexpr double kProbClamp = 1e-7;

}  // namespace

int Tape::push(std::vector<int> parents, int64_t size, BackFn back) {
  nodes_.push_back(Node{std::move(parents), size, std::move(back)});
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<float>& Tape::gbuf(int id) {
  if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
  auto& g = grads_[id];
  if (g.empty()) g.assign(static_cast<size_t>(nodes_[id].size), 0.0f);
  return g;
}

Tensor Tape::leaf(std::shared_ptr<std::vector<float>> data, Shape shape) {
  check_shape_positive(shape);
  if (static_cast<int64_t>(data->size()) != shape_numel(shape))
    fail(Errc::ShapeMismatch,
         "leaf: " + std::to_string(data->size()) + " values for shape " + shape_str(shape));
  int id = push({}, static_cast<int64_t>(data->size()), nullptr);
  return Tensor{std::move(data), std::move(shape), id};
}

Tensor Tape::param(std::vector<float> v, Shape shape) {
  return leaf(std::make_shared<std::vector<float>>(std::move(v)), std::move(shape));
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  size_t n = a.data->size();
  auto out = std::make_shared<std::vector<float>>(n);
  for (size_t i = 0; i < n; ++i) (*out)[i] = (*a.data)[i] + (*b.data)[i];
  if (!a.tracked() && !b.tracked()) return constant(out, a.shape);
  std::vector<int> parents;
  if (a.tracked()) parents.push_back(a.node);
  if (b.tracked()) parents.push_back(b.node);
  int an = a.node, bn = b.node;
  int id = push(parents, static_cast<int64_t>(n), [an, bn](Tape& t, const std::vector<float>& g) {
    if (an >= 0) {
      auto& ga = t.gbuf(an);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (bn >= 0) {
      auto& gb = t.gbuf(bn);
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
  return Tensor{out, a.shape, id};
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  size_t n = a.data->size();
  auto out = std::make_shared<std::vector<float>>(n);
  for (size_t i = 0; i < n; ++i) (*out)[i] = (*a.data)[i] - (*b.data)[i];
  if (!a.tracked() && !b.tracked()) return constant(out, a.shape);
  std::vector<int> parents;
  if (a.tracked()) parents.push_back(a.node);
  if (b.tracked()) parents.push_back(b.node);
  int an = a.node, bn = b.node;
  int id = push(parents, static_cast<int64_t>(n), [an, bn](Tape& t, const std::vector<float>& g) {
    if (an >= 0) {
      auto& ga = t.gbuf(an);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (bn >= 0) {
      auto& gb = t.gbuf(bn);
      for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
  return Tensor{out, a.shape, id};
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  size_t n = a.data->size();
  auto out = std::make_shared<std::vector<float>>(n);
  for (size_t i = 0; i < n; ++i) (*out)[i] = (*a.data)[i] * (*b.data)[i];
  if (!a.tracked() && !b.tracked()) return constant(out, a.shape);
  std::vector<int> parents;
  if (a.tracked()) parents.push_back(a.node);
  if (b.tracked()) parents.push_back(b.node);
  int an = a.node, bn = b.node;
  auto av = a.data, bv = b.data;
  int id = push(parents, static_cast<int64_t>(n),
                [an, bn, av, bv](Tape& t, const std::vector<float>& g) {
                  if (an >= 0) {
                    auto& ga = t.gbuf(an);
                    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*bv)[i];
                  }
                  if (bn >= 0) {
                    auto& gb = t.gbuf(bn);
                    for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * (*av)[i];
                  }
                });
  return Tensor{out, a.shape, id};
}

Tensor Tape::affine(const Tensor& x, float mul_c, float add_c) {
  size_t n = x.data->size();
  auto out = std::make_shared<std::vector<float>>(n);
  for (size_t i = 0; i < n; ++i) (*out)[i] = mul_c * (*x.data)[i] + add_c;
  if (!x.tracked()) return constant(out, x.shape);
  int xn = x.node;
  int id = push({xn}, static_cast<int64_t>(n),
                [xn, mul_c](Tape& t, const std::vector<float>& g) {
                  auto& gx = t.gbuf(xn);
                  for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mul_c;
                });
  return Tensor{out, x.shape, id};
}

Tensor Tape::unary_ew(const Tensor& x, std::vector<float> out_vals, std::vector<float> dydx) {
  auto out = std::make_shared<std::vector<float>>(std::move(out_vals));
  if (!x.tracked()) return constant(out, x.shape);
  int xn = x.node;
  auto d = std::make_shared<std::vector<float>>(std::move(dydx));
  int id = push({xn}, static_cast<int64_t>(out->size()),
                [xn, d](Tape& t, const std::vector<float>& g) {
                  auto& gx = t.gbuf(xn);
                  for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*d)[i];
                });
  return Tensor{out, x.shape, id};
}

Tensor Tape::activation(const Tensor& x, Act kind) {
  size_t n = x.data->size();
  std::vector<float> out(n), d(n);
  switch (kind) {
    case Act::ReLU:
      for (size_t i = 0; i < n; ++i) {
        float v = (*x.data)[i];
        out[i] = v > 0.0f ? v : 0.0f;
        d[i] = v > 0.0f ? 1.0f : 0.0f;
      }
      break;
    case Act::Sigmoid:
      for (size_t i = 0; i < n; ++i) {
        double s = 1.0 / (1.0 + std::exp(-static_cast<double>((*x.data)[i])));
        out[i] = static_cast<float>(s);
        d[i] = static_cast<float>(s * (1.0 - s));
      }
      break;
    case Act::Tanh:
      for (size_t i = 0; i < n; ++i) {
        double h = std::tanh(static_cast<double>((*x.data)[i]));
        out[i] = static_cast<float>(h);
        d[i] = static_cast<float>(1.0 - h * h);
      }
      break;
  }
  return unary_ew(x, std::move(out), std::move(d));
}

Tensor Tape::dropout(const Tensor& x, float rate, bool train, Rng& rng) {
  if (rate < 0.0f || rate >= 1.0f) fail(Errc::InvalidConfig, "dropout rate must be in [0,1)");
  if (!train || rate == 0.0f) return x;
  size_t n = x.data->size();
  float keep_scale = 1.0f / (1.0f - rate);
  std::vector<float> out(n), mask(n);
  for (size_t i = 0; i < n; ++i) {
    float m = rng.uniform() >= rate ? keep_scale : 0.0f;
    mask[i] = m;
    out[i] = (*x.data)[i] * m;
  }
  return unary_ew(x, std::move(out), std::move(mask));
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0])
    fail(Errc::ShapeMismatch, "matmul: " + shape_str(a.shape) + " x " + shape_str(b.shape));
  int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  auto out = std::make_shared<std::vector<float>>(static_cast<size_t>(m) * n);
  {
    std::vector<double> row(n);
    const float* A = a.data->data();
    const float* B = b.data->data();
    for (int i = 0; i < m; ++i) {
      std::fill(row.begin(), row.end(), 0.0);
      for (int kk = 0; kk < k; ++kk) {
        double av = A[i * k + kk];
        const float* brow = B + static_cast<size_t>(kk) * n;
        for (int j = 0; j < n; ++j) row[j] += av * brow[j];
      }
      for (int j = 0; j < n; ++j) (*out)[static_cast<size_t>(i) * n + j] = static_cast<float>(row[j]);
    }
  }
  if (!a.tracked() && !b.tracked()) return constant(out, {m, n});
  std::vector<int> parents;
  if (a.tracked()) parents.push_back(a.node);
  if (b.tracked()) parents.push_back(b.node);
  int an = a.node, bn = b.node;
  auto av = a.data, bv = b.data;
  int id = push(parents, static_cast<int64_t>(m) * n,
                [an, bn, av, bv, m, k, n](Tape& t, const std::vector<float>& g) {
                  const float* A = av->data();
                  const float* B = bv->data();
                  if (an >= 0) {
                    auto& ga = t.gbuf(an);
                    for (int i = 0; i < m; ++i)
                      for (int kk = 0; kk < k; ++kk) {
                        double acc = 0.0;
                        const float* grow = g.data() + static_cast<size_t>(i) * n;
                        const float* brow = B + static_cast<size_t>(kk) * n;
                        for (int j = 0; j < n; ++j) acc += static_cast<double>(grow[j]) * brow[j];
                        ga[static_cast<size_t>(i) * k + kk] += static_cast<float>(acc);
                      }
                  }
                  if (bn >= 0) {
                    auto& gb = t.gbuf(bn);
                    for (int kk = 0; kk < k; ++kk)
                      for (int j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (int i = 0; i < m; ++i)
                          acc += static_cast<double>(A[static_cast<size_t>(i) * k + kk]) *
                                 g[static_cast<size_t>(i) * n + j];
                        gb[static_cast<size_t>(kk) * n + j] += static_cast<float>(acc);
                      }
                  }
                });
  return Tensor{out, {m, n}, id};
}

namespace {

void check_linear_shapes(const Tensor& x, const Tensor& w, const Tensor* bias) {
  if (x.shape.size() != 2 || w.shape.size() != 2 || x.shape[1] != w.shape[1])
    fail(Errc::ShapeMismatch, "linear: x " + shape_str(x.shape) + ", w " + shape_str(w.shape));
  if (bias && (bias->shape.size() != 1 || bias->shape[0] != w.shape[0]))
    fail(Errc::ShapeMismatch, "linear: bias " + shape_str(bias->shape) + " for w " + shape_str(w.shape));
}

}  // namespace

Tensor Tape::linear(const Tensor& x, const Tensor& w) {
  check_linear_shapes(x, w, nullptr);
  Tensor none;
  return linear(x, w, none);
}

Tensor Tape::linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  bool has_bias = bias.data != nullptr;
  if (has_bias)
    check_linear_shapes(x, w, &bias);
  else
    check_linear_shapes(x, w, nullptr);
  int b = x.shape[0], n = x.shape[1], m = w.shape[0];
  auto out = std::make_shared<std::vector<float>>(static_cast<size_t>(b) * m);
  {
    const float* X = x.data->data();
    const float* W = w.data->data();
    for (int i = 0; i < b; ++i)
      for (int o = 0; o < m; ++o) {
        double acc = has_bias ? static_cast<double>((*bias.data)[o]) : 0.0;
        const float* xrow = X + static_cast<size_t>(i) * n;
        const float* wrow = W + static_cast<size_t>(o) * n;
        for (int kk = 0; kk < n; ++kk) acc += static_cast<double>(xrow[kk]) * wrow[kk];
        (*out)[static_cast<size_t>(i) * m + o] = static_cast<float>(acc);
      }
  }
  bool tracked = x.tracked() || w.tracked() || (has_bias && bias.tracked());
  if (!tracked) return constant(out, {b, m});
  std::vector<int> parents;
  if (x.tracked()) parents.push_back(x.node);
  if (w.tracked()) parents.push_back(w.node);
  if (has_bias && bias.tracked()) parents.push_back(bias.node);
  int xn = x.node, wn = w.node, biasn = has_bias ? bias.node : -1;
  auto xv = x.data, wv = w.data;
  int id = push(parents, static_cast<int64_t>(b) * m,
                [xn, wn, biasn, xv, wv, b, n, m](Tape& t, const std::vector<float>& g) {
                  const float* X = xv->data();
                  const float* W = wv->data();
                  if (xn >= 0) {
                    auto& gx = t.gbuf(xn);
                    std::vector<double> row(n);
                    for (int i = 0; i < b; ++i) {
                      std::fill(row.begin(), row.end(), 0.0);
                      for (int o = 0; o < m; ++o) {
                        double gv = g[static_cast<size_t>(i) * m + o];
                        const float* wrow = W + static_cast<size_t>(o) * n;
                        for (int kk = 0; kk < n; ++kk) row[kk] += gv * wrow[kk];
                      }
                      for (int kk = 0; kk < n; ++kk)
                        gx[static_cast<size_t>(i) * n + kk] += static_cast<float>(row[kk]);
                    }
                  }
                  if (wn >= 0) {
                    auto& gw = t.gbuf(wn);
                    std::vector<double> dw(static_cast<size_t>(m) * n, 0.0);
                    for (int i = 0; i < b; ++i) {
                      const float* xrow = X + static_cast<size_t>(i) * n;
                      for (int o = 0; o < m; ++o) {
                        double gv = g[static_cast<size_t>(i) * m + o];
                        double* drow = dw.data() + static_cast<size_t>(o) * n;
                        for (int kk = 0; kk < n; ++kk) drow[kk] += gv * xrow[kk];
                      }
                    }
                    for (size_t i = 0; i < dw.size(); ++i) gw[i] += static_cast<float>(dw[i]);
                  }
                  if (biasn >= 0) {
                    auto& gb = t.gbuf(biasn);
                    for (int o = 0; o < m; ++o) {
                      double acc = 0.0;
                      for (int i = 0; i < b; ++i) acc += g[static_cast<size_t>(i) * m + o];
                      gb[o] += static_cast<float>(acc);
                    }
                  }
                });
  return Tensor{out, {b, m}, id};
}

Tensor Tape::conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
                    int padding) {
  bool batched = x.shape.size() == 3;
  if (!batched && x.shape.size() != 2)
    fail(Errc::ShapeMismatch, "conv1d: input " + shape_str(x.shape));
  int B = batched ? x.shape[0] : 1;
  int cin = batched ? x.shape[1] : x.shape[0];
  int L = batched ? x.shape[2] : x.shape[1];
  if (w.shape.size() != 3 || w.shape[1] != cin)
    fail(Errc::ShapeMismatch,
         "conv1d: weight " + shape_str(w.shape) + " for input " + shape_str(x.shape));
  int cout = w.shape[0], K = w.shape[2];
  bool has_bias = bias.data != nullptr;
  if (has_bias && (bias.shape.size() != 1 || bias.shape[0] != cout))
    fail(Errc::ShapeMismatch, "conv1d: bias " + shape_str(bias.shape));
  if (stride < 1 || padding < 0) fail(Errc::InvalidConfig, "conv1d: stride >= 1, padding >= 0");
  if (L + 2 * padding < K)
    fail(Errc::KernelLargerThanInput,
         "conv1d: kernel " + std::to_string(K) + " exceeds padded length " +
             std::to_string(L + 2 * padding));
  int M = (L + 2 * padding - K) / stride + 1;

  auto out = std::make_shared<std::vector<float>>(static_cast<size_t>(B) * cout * M);
  {
    const float* X = x.data->data();
    const float* W = w.data->data();
    for (int bi = 0; bi < B; ++bi)
      for (int co = 0; co < cout; ++co) {
        float* yrow = out->data() + (static_cast<size_t>(bi) * cout + co) * M;
        for (int i = 0; i < M; ++i) {
          double acc = has_bias ? static_cast<double>((*bias.data)[co]) : 0.0;
          int base = i * stride - padding;
          int j0 = base < 0 ? -base : 0;
          int j1 = std::min(K, L - base);
          for (int ci = 0; ci < cin; ++ci) {
            const float* xrow = X + (static_cast<size_t>(bi) * cin + ci) * L + base;
            const float* wrow = W + (static_cast<size_t>(co) * cin + ci) * K;
            for (int j = j0; j < j1; ++j) acc += static_cast<double>(wrow[j]) * xrow[j];
          }
          yrow[i] = static_cast<float>(acc);
        }
      }
  }
  Shape out_shape = batched ? Shape{B, cout, M} : Shape{cout, M};
  bool tracked = x.tracked() || w.tracked() || (has_bias && bias.tracked());
  if (!tracked) return constant(out, out_shape);
  std::vector<int> parents;
  if (x.tracked()) parents.push_back(x.node);
  if (w.tracked()) parents.push_back(w.node);
  if (has_bias && bias.tracked()) parents.push_back(bias.node);
  int xn = x.node, wn = w.node, biasn = has_bias ? bias.node : -1;
  auto xv = x.data, wv = w.data;
  int id = push(
      parents, static_cast<int64_t>(B) * cout * M,
      [xn, wn, biasn, xv, wv, B, cin, L, cout, K, M, stride, padding](
          Tape& t, const std::vector<float>& g) {
        const float* X = xv->data();
        const float* W = wv->data();
        std::vector<double> dw;
        std::vector<double> db;
        std::vector<double> dx;
        if (wn >= 0) dw.assign(static_cast<size_t>(cout) * cin * K, 0.0);
        if (biasn >= 0) db.assign(cout, 0.0);
        for (int bi = 0; bi < B; ++bi) {
          if (xn >= 0) dx.assign(static_cast<size_t>(cin) * L, 0.0);
          for (int co = 0; co < cout; ++co) {
            const float* grow = g.data() + (static_cast<size_t>(bi) * cout + co) * M;
            for (int i = 0; i < M; ++i) {
              double gv = grow[i];
              if (biasn >= 0) db[co] += gv;
              if (gv == 0.0 && xn < 0) continue;
              int base = i * stride - padding;
              int j0 = base < 0 ? -base : 0;
              int j1 = std::min(K, L - base);
              for (int ci = 0; ci < cin; ++ci) {
                const float* xrow = X + (static_cast<size_t>(bi) * cin + ci) * L + base;
                const float* wrow = W + (static_cast<size_t>(co) * cin + ci) * K;
                if (wn >= 0) {
                  double* dwrow = dw.data() + (static_cast<size_t>(co) * cin + ci) * K;
                  for (int j = j0; j < j1; ++j) dwrow[j] += gv * xrow[j];
                }
                if (xn >= 0) {
                  double* dxrow = dx.data() + static_cast<size_t>(ci) * L + base;
                  for (int j = j0; j < j1; ++j) dxrow[j] += gv * wrow[j];
                }
              }
            }
          }
          if (xn >= 0) {
            auto& gx = t.gbuf(xn);
            float* gxrow = gx.data() + static_cast<size_t>(bi) * cin * L;
            for (size_t i = 0; i < dx.size(); ++i) gxrow[i] += static_cast<float>(dx[i]);
          }
        }
        if (wn >= 0) {
          auto& gw = t.gbuf(wn);
          for (size_t i = 0; i < dw.size(); ++i) gw[i] += static_cast<float>(dw[i]);
        }
        if (biasn >= 0) {
          auto& gb = t.gbuf(biasn);
          for (int co = 0; co < cout; ++co) gb[co] += static_cast<float>(db[co]);
        }
      });
  return Tensor{out, out_shape, id};
}

Tensor Tape::pool1d(const Tensor& x, PoolKind kind, int size) {
  bool batched = x.shape.size() == 3;
  if (!batched && x.shape.size() != 2)
    fail(Errc::ShapeMismatch, "pool1d: input " + shape_str(x.shape));
  if (size < 1) fail(Errc::InvalidConfig, "pool1d: size >= 1");
  int B = batched ? x.shape[0] : 1;
  int C = batched ? x.shape[1] : x.shape[0];
  int L = batched ? x.shape[2] : x.shape[1];
  int M = L / size;
  if (M < 1)
    fail(Errc::KernelLargerThanInput,
         "pool1d: window " + std::to_string(size) + " exceeds length " + std::to_string(L));
  size_t rows = static_cast<size_t>(B) * C;
  auto out = std::make_shared<std::vector<float>>(rows * M);
  std::vector<int32_t> argmax;
  if (kind == PoolKind::Max) argmax.resize(rows * M);
  {
    const float* X = x.data->data();
    for (size_t r = 0; r < rows; ++r) {
      const float* xrow = X + r * L;
      float* yrow = out->data() + r * M;
      for (int i = 0; i < M; ++i) {
        int t0 = i * size;
        if (kind == PoolKind::Avg) {
          double acc = 0.0;
          for (int j = 0; j < size; ++j) acc += xrow[t0 + j];
          yrow[i] = static_cast<float>(acc / size);
        } else {
          int best = t0;
          for (int j = 1; j < size; ++j)
            if (xrow[t0 + j] > xrow[best]) best = t0 + j;
          yrow[i] = xrow[best];
          argmax[r * M + i] = best;
        }
      }
    }
  }
  Shape out_shape = batched ? Shape{B, C, M} : Shape{C, M};
  if (!x.tracked()) return constant(out, out_shape);
  int xn = x.node;
  BackFn back;
  if (kind == PoolKind::Avg) {
    float inv = 1.0f / static_cast<float>(size);
    back = [xn, rows, M, L, size, inv](Tape& t, const std::vector<float>& g) {
      auto& gx = t.gbuf(xn);
      for (size_t r = 0; r < rows; ++r)
        for (int i = 0; i < M; ++i) {
          float gv = g[r * M + i] * inv;
          float* gxw = gx.data() + r * L + static_cast<size_t>(i) * size;
          for (int j = 0; j < size; ++j) gxw[j] += gv;
        }
    };
  } else {
    back = [xn, rows, M, L, arg = std::move(argmax)](Tape& t, const std::vector<float>& g) {
      auto& gx = t.gbuf(xn);
      for (size_t r = 0; r < rows; ++r)
        for (int i = 0; i < M; ++i) gx[r * L + arg[r * M + i]] += g[r * M + i];
    };
  }
  int id = push({xn}, static_cast<int64_t>(rows) * M, std::move(back));
  return Tensor{out, out_shape, id};
}

Tensor Tape::concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) fail(Errc::ShapeMismatch, "concat_channels: no inputs");
  for (const auto& x : xs)
    if (x.shape.size() != 3)
      fail(Errc::ShapeMismatch, "concat_channels: want [b,c,l], got " + shape_str(x.shape));
  int B = xs[0].shape[0], L = xs[0].shape[2];
  int ctot = 0;
  for (const auto& x : xs) {
    if (x.shape[0] != B || x.shape[2] != L)
      fail(Errc::ShapeMismatch, "concat_channels: " + shape_str(xs[0].shape) + " vs " +
                                    shape_str(x.shape));
    ctot += x.shape[1];
  }
  auto out = std::make_shared<std::vector<float>>(static_cast<size_t>(B) * ctot * L);
  int off = 0;
  for (const auto& x : xs) {
    int c = x.shape[1];
    for (int bi = 0; bi < B; ++bi)
      std::copy(x.data->begin() + static_cast<size_t>(bi) * c * L,
                x.data->begin() + static_cast<size_t>(bi + 1) * c * L,
                out->begin() + (static_cast<size_t>(bi) * ctot + off) * L);
    off += c;
  }
  bool tracked = false;
  for (const auto& x : xs) tracked |= x.tracked();
  if (!tracked) return constant(out, {B, ctot, L});
  std::vector<int> parents;
  std::vector<std::pair<int, std::pair<int, int>>> slots;  // (node, (chan offset, chan count))
  off = 0;
  for (const auto& x : xs) {
    if (x.tracked()) {
      parents.push_back(x.node);
      slots.push_back({x.node, {off, x.shape[1]}});
    }
    off += x.shape[1];
  }
  int id = push(parents, static_cast<int64_t>(B) * ctot * L,
                [slots, B, ctot, L](Tape& t, const std::vector<float>& g) {
                  for (const auto& s : slots) {
                    auto& gx = t.gbuf(s.first);
                    int coff = s.second.first, c = s.second.second;
                    for (int bi = 0; bi < B; ++bi) {
                      const float* gsrc = g.data() + (static_cast<size_t>(bi) * ctot + coff) * L;
                      float* gdst = gx.data() + static_cast<size_t>(bi) * c * L;
                      for (size_t i = 0; i < static_cast<size_t>(c) * L; ++i) gdst[i] += gsrc[i];
                    }
                  }
                });
  return Tensor{out, {B, ctot, L}, id};
}

Tensor Tape::reshape(const Tensor& x, Shape shape) const {
  check_shape_positive(shape);
  if (shape_numel(shape) != x.numel())
    fail(Errc::ShapeMismatch, "reshape: " + shape_str(x.shape) + " -> " + shape_str(shape));
  return Tensor{x.data, std::move(shape), x.node};
}

Tensor Tape::flatten(const Tensor& x) const {
  if (x.shape.size() < 2) return x;
  int b = x.shape[0];
  return reshape(x, {b, static_cast<int>(x.numel() / b)});
}

Tensor Tape::sum_all(const Tensor& x) {
  double acc = 0.0;
  for (float v : *x.data) acc += v;
  auto out = std::make_shared<std::vector<float>>(1, static_cast<float>(acc));
  if (!x.tracked()) return constant(out, {1});
  int xn = x.node;
  int id = push({xn}, 1, [xn](Tape& t, const std::vector<float>& g) {
    auto& gx = t.gbuf(xn);
    for (auto& v : gx) v += g[0];
  });
  return Tensor{out, {1}, id};
}

Tensor Tape::mean_all(const Tensor& x) {
  double acc = 0.0;
  for (float v : *x.data) acc += v;
  double inv = 1.0 / static_cast<double>(x.data->size());
  auto out = std::make_shared<std::vector<float>>(1, static_cast<float>(acc * inv));
  if (!x.tracked()) return constant(out, {1});
  int xn = x.node;
  float invf = static_cast<float>(inv);
  int id = push({xn}, 1, [xn, invf](Tape& t, const std::vector<float>& g) {
    auto& gx = t.gbuf(xn);
    for (auto& v : gx) v += g[0] * invf;
  });
  return Tensor{out, {1}, id};
}

Tensor Tape::loss_impl(const Tensor& p, const std::vector<float>& y, std::vector<double> per_elem,
                       std::vector<double> dldp) {
  (void)y;
  size_t n = per_elem.size();
  double acc = 0.0;
  for (double v : per_elem) acc += v;
  auto out = std::make_shared<std::vector<float>>(1, static_cast<float>(acc / n));
  if (!p.tracked()) return constant(out, {1});
  int pn = p.node;
  std::vector<float> d(n);
  for (size_t i = 0; i < n; ++i) d[i] = static_cast<float>(dldp[i] / n);
  auto dp = std::make_shared<std::vector<float>>(std::move(d));
  int id = push({pn}, 1, [pn, dp](Tape& t, const std::vector<float>& g) {
    auto& gp = t.gbuf(pn);
    for (size_t i = 0; i < gp.size(); ++i) gp[i] += g[0] * (*dp)[i];
  });
  return Tensor{out, {1}, id};
}

namespace {

void check_loss_args(const char* op, const Tensor& p, const std::vector<float>& y) {
  if (static_cast<size_t>(p.numel()) != y.size())
    fail(Errc::ShapeMismatch, std::string(op) + ": " + std::to_string(p.numel()) +
                                  " predictions vs " + std::to_string(y.size()) + " targets");
  if (y.empty()) fail(Errc::ShapeMismatch, std::string(op) + ": empty batch");
}

}  // namespace

Tensor Tape::bce_loss(const Tensor& p, const std::vector<float>& y) {
  check_loss_args("bce_loss", p, y);
  size_t n = y.size();
  std::vector<double> l(n), d(n);
  for (size_t i = 0; i < n; ++i) {
    double pv = (*p.data)[i];
    double pc = std::min(std::max(pv, kProbClamp), 1.0 - kProbClamp);
    bool clamped = pv < kProbClamp || pv > 1.0 - kProbClamp;
    double yv = y[i];
    l[i] = -(yv * std::log(pc) + (1.0 - yv) * std::log(1.0 - pc));
    d[i] = clamped ? 0.0 : (pc - yv) / (pc * (1.0 - pc));
  }
  return loss_impl(p, y, std::move(l), std::move(d));
}

Tensor Tape::mse_loss(const Tensor& p, const std::vector<float>& y) {
  check_loss_args("mse_loss", p, y);
  size_t n = y.size();
  std::vector<double> l(n), d(n);
  for (size_t i = 0; i < n; ++i) {
    double e = static_cast<double>((*p.data)[i]) - y[i];
    l[i] = e * e;
    d[i] = 2.0 * e;
  }
  return loss_impl(p, y, std::move(l), std::move(d));
}

Tensor Tape::focal_loss(const Tensor& p, const std::vector<float>& y, float alpha, float gamma) {
  check_loss_args("focal_loss", p, y);
  size_t n = y.size();
  std::vector<double> l(n), d(n);
  for (size_t i = 0; i < n; ++i) {
    double pv = (*p.data)[i];
    double pc = std::min(std::max(pv, kProbClamp), 1.0 - kProbClamp);
    bool clamped = pv < kProbClamp || pv > 1.0 - kProbClamp;
    bool pos = y[i] > 0.5f;
    double pt = pos ? pc : 1.0 - pc;
    double at = pos ? alpha : 1.0 - alpha;
    double om = 1.0 - pt;
    l[i] = -at * std::pow(om, static_cast<double>(gamma)) * std::log(pt);
    // d/dpt of -at*(1-pt)^g*ln(pt); the g==0 branch avoids 0*inf at pt->1.
    double dldpt =
        gamma == 0.0f
            ? -at / pt
            : at * (gamma * std::pow(om, gamma - 1.0) * std::log(pt) - std::pow(om, static_cast<double>(gamma)) / pt);
    d[i] = clamped ? 0.0 : dldpt * (pos ? 1.0 : -1.0);
  }
  return loss_impl(p, y, std::move(l), std::move(d));
}

size_t Tape::backward(const Tensor& loss) {
  if (!loss.tracked()) fail(Errc::NonScalarLoss, "loss is not tracked on this tape");
  if (loss.numel() != 1)
    fail(Errc::NonScalarLoss, "loss has shape " + shape_str(loss.shape) + ", want scalar");
  grads_.assign(nodes_.size(), {});

  std::vector<char> reach(nodes_.size(), 0);
  std::vector<int> stack{loss.node};
  reach[loss.node] = 1;
  size_t visited = 1;
  while (!stack.empty()) {
    int id = stack.back();
    stack.pop_back();
    for (int par : nodes_[id].parents)
      if (!reach[par]) {
        reach[par] = 1;
        ++visited;
        stack.push_back(par);
      }
  }

  gbuf(loss.node)[0] = 1.0f;
  for (int id = loss.node; id >= 0; --id) {
    if (!reach[id] || !nodes_[id].back) continue;
    nodes_[id].back(*this, gbuf(id));
  }
  return visited;
}

const std::vector<float>& Tape::grad(const Tensor& t) {
  if (!t.tracked()) fail(Errc::ShapeMismatch, "grad of a constant tensor");
  return gbuf(t.node);
}

}  // namespace tscx
