#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "tscx/error.hpp"
#include "tscx/rng.hpp"
#include "tscx/tensor.hpp"

using namespace tscx;

namespace {

std::vector<double> rand_snapped(Rng& rng, size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = oracle::snap(rng.uniform(lo, hi));
  return v;
}

// values on a coarse grid with distinct entries, so max-pool argmax and the
// ReLU kink sit far from the finite-difference step
std::vector<double> rand_coarse(Rng& rng, size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) {
    double q = 0.05 + 0.1 * static_cast<double>(rng.below(20));  // 0.05 .. 1.95
    x = oracle::snap(rng.uniform() < 0.5 ? -q : q);
  }
  return v;
}

}  // namespace

TEST_CASE("matmul values") {
  Tape t;
  // identity leaves the matrix unchanged
  auto a = t.param({1, 2, 3, 4}, {2, 2});
  auto eye = constant({1, 0, 0, 1}, {2, 2});
  auto r = t.matmul(a, eye);
  CHECK((*r.data) == std::vector<float>{1, 2, 3, 4});

  // [[1,2]] x [[3],[4]] = [[11]]
  auto b = t.matmul(constant({1, 2}, {1, 2}), constant({3, 4}, {2, 1}));
  CHECK(b.scalar() == 11.0f);

  // random 3x4 x 4x2 against the naive triple loop
  Rng rng(7);
  auto av = rand_snapped(rng, 12, -1, 1);
  auto bv = rand_snapped(rng, 8, -1, 1);
  auto m = t.matmul(constant(oracle::to_f32(av), {3, 4}), constant(oracle::to_f32(bv), {4, 2}));
  auto ref = oracle::matmul_ref(av, 3, 4, bv, 2);
  for (size_t i = 0; i < ref.size(); ++i)
    CHECK(std::fabs((*m.data)[i] - ref[i]) < 1e-6);

  CHECK_THROWS_AS(t.matmul(constant({1, 2}, {1, 2}), constant({1, 2}, {1, 2})), Error);
}

TEST_CASE("conv1d values and output length") {
  Tape t;
  // l=391, k=3, o=1, s=1 keeps length 391
  auto x391 = zeros({1, 391});
  auto w3 = constant({0.5f, 0.5f, 0.5f}, {1, 1, 3});
  auto y391 = t.conv1d(x391, w3, constant({0.0f}, {1}), 1, 1);
  CHECK(y391.shape == Shape{1, 391});

  // hand example: [1,2,4] * [1,0,-1], valid -> [-3]
  auto y = t.conv1d(constant({1, 2, 4}, {1, 3}), constant({1, 0, -1}, {1, 1, 3}),
                    constant({0.0f}, {1}), 1, 0);
  CHECK(y.shape == Shape{1, 1});
  CHECK(y.scalar() == -3.0f);

  // randomized config against the direct-sum oracle
  Rng rng(11);
  for (int it = 0; it < 50; ++it) {
    int cin = 1 + static_cast<int>(rng.below(3));
    int l = 5 + static_cast<int>(rng.below(20));
    int k = 1 + static_cast<int>(rng.below(5));
    int s = 1 + static_cast<int>(rng.below(3));
    int o = static_cast<int>(rng.below(3));
    if (l + 2 * o < k) continue;
    int cout = 1 + static_cast<int>(rng.below(3));
    int batch = 1 + static_cast<int>(rng.below(2));
    auto xv = rand_snapped(rng, static_cast<size_t>(batch) * cin * l, -1, 1);
    auto wv = rand_snapped(rng, static_cast<size_t>(cout) * cin * k, -1, 1);
    auto bv = rand_snapped(rng, cout, -1, 1);
    auto got = t.conv1d(constant(oracle::to_f32(xv), {batch, cin, l}),
                        constant(oracle::to_f32(wv), {cout, cin, k}),
                        constant(oracle::to_f32(bv), {cout}), s, o);
    int m = oracle::conv1d_out_len(l, k, s, o);
    CHECK(got.shape == Shape{batch, cout, m});
    auto ref = oracle::conv1d_ref(xv, batch, cin, l, wv, cout, k, bv, s, o);
    for (size_t i = 0; i < ref.size(); ++i)
      CHECK(std::fabs((*got.data)[i] - ref[i]) < 1e-5);
  }

  CHECK_THROWS_AS(t.conv1d(constant({1, 2}, {1, 2}), w3, constant({0.0f}, {1}), 1, 0), Error);
  try {
    t.conv1d(constant({1, 2}, {1, 2}), w3, constant({0.0f}, {1}), 1, 0);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::KernelLargerThanInput);
  }
}

TEST_CASE("pool1d values") {
  Tape t;
  auto avg = t.pool1d(constant({1, 2, 3, 4, 5, 6}, {1, 6}), PoolKind::Avg, 3);
  CHECK((*avg.data) == std::vector<float>{2, 5});
  auto mx = t.pool1d(constant({1, 3, 2, 2}, {1, 4}), PoolKind::Max, 2);
  CHECK((*mx.data) == std::vector<float>{3, 2});
  auto trunc = t.pool1d(constant({1, 2, 3, 4, 5, 6, 7}, {1, 7}), PoolKind::Avg, 3);
  CHECK(trunc.shape == Shape{1, 2});  // remainder dropped
}

TEST_CASE("activations") {
  Tape t;
  auto r = t.activation(constant({-1, 2}, {2}), Act::ReLU);
  CHECK((*r.data) == std::vector<float>{0, 2});
  auto th = t.activation(constant({0.0f}, {1}), Act::Tanh);
  CHECK(th.scalar() == 0.0f);
  auto sg = t.activation(constant({0.0f}, {1}), Act::Sigmoid);
  CHECK(sg.scalar() == 0.5f);

  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    float a = static_cast<float>(rng.uniform(-5, 5));
    float b = a + static_cast<float>(rng.uniform(0.01, 3.0));
    auto sa = t.activation(constant({a}, {1}), Act::Sigmoid).scalar();
    auto sb = t.activation(constant({b}, {1}), Act::Sigmoid).scalar();
    CHECK(sa < sb);  // sigmoid is strictly monotone
  }
}

TEST_CASE("dropout") {
  Tape t;
  Rng rng(5);
  auto x = constant(std::vector<float>(100, 1.0f), {100});
  auto same = t.dropout(x, 0.0f, true, rng);
  CHECK(same.data.get() == x.data.get());  // rate 0: identity
  auto evald = t.dropout(x, 0.2f, false, rng);
  CHECK(evald.data.get() == x.data.get());  // eval mode: identity

  // Monte-Carlo contract on 1e5 elements
  const size_t n = 100000;
  std::vector<float> big(n);
  Rng vals(17);
  for (auto& v : big) v = static_cast<float>(vals.uniform(0.5, 1.5));
  double mean_in = 0.0;
  for (float v : big) mean_in += v;
  mean_in /= static_cast<double>(n);
  auto dropped = t.dropout(constant(big, {static_cast<int>(n)}), 0.2f, true, rng);
  size_t zeros_seen = 0;
  double mean_out = 0.0;
  for (float v : *dropped.data) {
    if (v == 0.0f) ++zeros_seen;
    mean_out += v;
  }
  mean_out /= static_cast<double>(n);
  double zero_frac = static_cast<double>(zeros_seen) / static_cast<double>(n);
  CHECK(std::fabs(zero_frac - 0.2) < 0.01);
  CHECK(std::fabs(mean_out - mean_in) < 0.02 * mean_in);
}

TEST_CASE("backward basics") {
  // loss = sum(W x) with x fixed: dL/dW[i][j] = x[j] for every row i
  {
    Tape t;
    auto w = t.param({0.5f, -1, 2, 0, 1, 1}, {2, 3});
    auto x = constant({3, 5, 7}, {3, 1});
    auto loss = t.sum_all(t.matmul(w, x));
    t.backward(loss);
    auto& g = t.grad(w);
    CHECK(g == std::vector<float>{3, 5, 7, 3, 5, 7});
  }
  // fan-out accumulates: loss = y + y with y = x
  {
    Tape t;
    auto x = t.param({1.5f}, {1});
    auto loss = t.add(x, x);
    t.backward(loss);
    CHECK(t.grad(x)[0] == 2.0f);
  }
  // non-scalar loss rejected
  {
    Tape t;
    auto x = t.param({1, 2}, {2});
    auto y = t.affine(x, 2.0f, 0.0f);
    CHECK_THROWS_AS(t.backward(y), Error);
    try {
      t.backward(y);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::NonScalarLoss);
    }
  }
}

TEST_CASE("backward visit count equals tape length on a pure chain") {
  Tape t;
  auto x = t.param({0.3f, -0.7f, 1.1f, 0.2f}, {4});
  auto h1 = t.activation(x, Act::Tanh);
  auto h2 = t.affine(h1, 2.0f, 0.1f);
  auto h3 = t.activation(h2, Act::Sigmoid);
  auto loss = t.mean_all(h3);
  size_t visited = t.backward(loss);
  CHECK(visited == t.size());
  CHECK(visited == 5);
}

TEST_CASE("constants stay off the tape") {
  Tape t;
  auto a = constant({1, 2}, {2});
  auto b = constant({3, 4}, {2});
  auto c = t.add(a, b);
  CHECK_FALSE(c.tracked());
  CHECK(t.size() == 0);
}

TEST_CASE("reshape and flatten share the tape node") {
  Tape t;
  auto x = t.param({1, 2, 3, 4, 5, 6}, {2, 3});
  auto y = t.reshape(x, {3, 2});
  CHECK(y.node == x.node);
  auto f = t.flatten(t.reshape(x, {1, 2, 3}));
  CHECK(f.shape == Shape{1, 6});
  auto loss = t.sum_all(t.mul(y, constant({1, 2, 3, 4, 5, 6}, {3, 2})));
  t.backward(loss);
  CHECK(t.grad(x) == std::vector<float>{1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(t.reshape(x, {4, 2}), Error);
}

TEST_CASE("loss values") {
  Tape t;
  auto p_half = constant({0.5f}, {1});
  CHECK(std::fabs(t.bce_loss(p_half, {1.0f}).scalar() - std::log(2.0f)) < 1e-6);
  CHECK(std::fabs(t.mse_loss(constant({0.3f}, {1}), {0.0f}).scalar() - 0.09f) < 1e-7);

  // focal with gamma=0, alpha=0.5 is exactly half of BCE
  Rng rng(23);
  for (int i = 0; i < 200; ++i) {
    float p = static_cast<float>(rng.uniform(0.001, 0.999));
    float y = rng.uniform() < 0.5 ? 0.0f : 1.0f;
    auto f = t.focal_loss(constant({p}, {1}), {y}, 0.5f, 0.0f).scalar();
    auto b = t.bce_loss(constant({p}, {1}), {y}).scalar();
    CHECK(std::fabs(f - 0.5f * b) <= 1e-9f * std::max(1.0f, b));
  }
}

// ---------------------------------------------------------------------------
// finite-difference gradient checks, one per primitive
// ---------------------------------------------------------------------------

namespace {

// Scalarizes an op output as sum(out * r) so every output element feeds the
// loss with its own weight; the double reference applies the same weights.
double weighted_sum(const std::vector<double>& out, const std::vector<double>& r) {
  double acc = 0.0;
  for (size_t i = 0; i < out.size(); ++i) acc += out[i] * r[i];
  return acc;
}

void check_grad(double max_rel, const oracle::GradCompare& cmp) {
  INFO("worst element ", cmp.worst, ": analytic ", cmp.analytic, " vs numeric ", cmp.numeric);
  CHECK(cmp.max_rel < max_rel);
}

}  // namespace

TEST_CASE("gradcheck: matmul") {
  Rng rng(31);
  auto av = rand_snapped(rng, 12, -1, 1);
  auto bv = rand_snapped(rng, 8, -1, 1);
  auto rv = rand_snapped(rng, 6, -1, 1);
  auto ref = [&](const std::vector<double>& th) {
    std::vector<double> a(th.begin(), th.begin() + 12), b(th.begin() + 12, th.end());
    return weighted_sum(oracle::matmul_ref(a, 3, 4, b, 2), rv);
  };
  std::vector<double> theta = av;
  theta.insert(theta.end(), bv.begin(), bv.end());

  Tape t;
  auto a = t.param(oracle::to_f32(av), {3, 4});
  auto b = t.param(oracle::to_f32(bv), {4, 2});
  auto loss = t.sum_all(t.mul(t.matmul(a, b), constant(oracle::to_f32(rv), {3, 2})));
  t.backward(loss);
  auto analytic = oracle::to_f64(t.grad(a));
  auto gb = oracle::to_f64(t.grad(b));
  analytic.insert(analytic.end(), gb.begin(), gb.end());

  check_grad(1e-3, oracle::compare_gradients(analytic, oracle::fd_gradient(ref, theta)));
}

TEST_CASE("gradcheck: linear with bias") {
  Rng rng(37);
  const int B = 2, N = 3, M = 4;
  auto xv = rand_snapped(rng, B * N, -1, 1);
  auto wv = rand_snapped(rng, M * N, -1, 1);
  auto bv = rand_snapped(rng, M, -1, 1);
  auto rv = rand_snapped(rng, B * M, -1, 1);
  auto ref = [&](const std::vector<double>& th) {
    std::vector<double> out(B * M);
    for (int i = 0; i < B; ++i)
      for (int o = 0; o < M; ++o) {
        double acc = th[B * N + M * N + o];
        for (int k = 0; k < N; ++k) acc += th[i * N + k] * th[B * N + o * N + k];
        out[i * M + o] = acc;
      }
    return weighted_sum(out, rv);
  };
  std::vector<double> theta = xv;
  theta.insert(theta.end(), wv.begin(), wv.end());
  theta.insert(theta.end(), bv.begin(), bv.end());

  Tape t;
  auto x = t.param(oracle::to_f32(xv), {B, N});
  auto w = t.param(oracle::to_f32(wv), {M, N});
  auto b = t.param(oracle::to_f32(bv), {M});
  auto loss = t.sum_all(t.mul(t.linear(x, w, b), constant(oracle::to_f32(rv), {B, M})));
  t.backward(loss);
  auto analytic = oracle::to_f64(t.grad(x));
  auto gw = oracle::to_f64(t.grad(w));
  auto gb = oracle::to_f64(t.grad(b));
  analytic.insert(analytic.end(), gw.begin(), gw.end());
  analytic.insert(analytic.end(), gb.begin(), gb.end());

  check_grad(1e-3, oracle::compare_gradients(analytic, oracle::fd_gradient(ref, theta)));
}

TEST_CASE("gradcheck: conv1d stride and padding") {
  Rng rng(41);
  const int B = 2, CIN = 2, L = 13, COUT = 3, K = 5, S = 2, P = 2;
  const int M = oracle::conv1d_out_len(L, K, S, P);
  auto xv = rand_snapped(rng, static_cast<size_t>(B) * CIN * L, -1, 1);
  auto wv = rand_snapped(rng, static_cast<size_t>(COUT) * CIN * K, -1, 1);
  auto bv = rand_snapped(rng, COUT, -1, 1);
  auto rv = rand_snapped(rng, static_cast<size_t>(B) * COUT * M, -1, 1);
  size_t nx = xv.size(), nw = wv.size();
  auto ref = [&](const std::vector<double>& th) {
    std::vector<double> x(th.begin(), th.begin() + nx);
    std::vector<double> w(th.begin() + nx, th.begin() + nx + nw);
    std::vector<double> b(th.begin() + nx + nw, th.end());
    return weighted_sum(oracle::conv1d_ref(x, B, CIN, L, w, COUT, K, b, S, P), rv);
  };
  std::vector<double> theta = xv;
  theta.insert(theta.end(), wv.begin(), wv.end());
  theta.insert(theta.end(), bv.begin(), bv.end());

  Tape t;
  auto x = t.param(oracle::to_f32(xv), {B, CIN, L});
  auto w = t.param(oracle::to_f32(wv), {COUT, CIN, K});
  auto b = t.param(oracle::to_f32(bv), {COUT});
  auto out = t.conv1d(x, w, b, S, P);
  auto loss = t.sum_all(t.mul(out, constant(oracle::to_f32(rv), out.shape)));
  t.backward(loss);
  auto analytic = oracle::to_f64(t.grad(x));
  auto gw = oracle::to_f64(t.grad(w));
  auto gb = oracle::to_f64(t.grad(b));
  analytic.insert(analytic.end(), gw.begin(), gw.end());
  analytic.insert(analytic.end(), gb.begin(), gb.end());

  check_grad(1e-3, oracle::compare_gradients(analytic, oracle::fd_gradient(ref, theta)));
}

TEST_CASE("gradcheck: pooling") {
  Rng rng(43);
  const int C = 2, L = 9, SZ = 3, M = L / SZ;
  auto xv = rand_coarse(rng, static_cast<size_t>(C) * L);  // distinct, off the FD step
  auto rv = rand_snapped(rng, static_cast<size_t>(C) * M, -1, 1);
  for (bool maxp : {false, true}) {
    auto ref = [&](const std::vector<double>& th) {
      return weighted_sum(oracle::pool_ref(th, C, L, SZ, maxp), rv);
    };
    Tape t;
    auto x = t.param(oracle::to_f32(xv), {C, L});
    auto out = t.pool1d(x, maxp ? PoolKind::Max : PoolKind::Avg, SZ);
    auto loss = t.sum_all(t.mul(out, constant(oracle::to_f32(rv), out.shape)));
    t.backward(loss);
    check_grad(1e-3, oracle::compare_gradients(oracle::to_f64(t.grad(x)),
                                               oracle::fd_gradient(ref, xv)));
  }
}

TEST_CASE("gradcheck: activations and elementwise ops") {
  Rng rng(47);
  auto xv = rand_coarse(rng, 12);
  auto yv = rand_coarse(rng, 12);
  auto rv = rand_snapped(rng, 12, -1, 1);

  auto run = [&](const char* name,
                 std::function<Tensor(Tape&, const Tensor&, const Tensor&)> op,
                 std::function<double(double, double)> refop, bool needs_y) {
    INFO("op ", name);
    auto ref = [&](const std::vector<double>& th) {
      std::vector<double> out(12);
      for (int i = 0; i < 12; ++i) out[i] = refop(th[i], needs_y ? th[12 + i] : 0.0);
      return weighted_sum(out, rv);
    };
    std::vector<double> theta = xv;
    if (needs_y) theta.insert(theta.end(), yv.begin(), yv.end());
    Tape t;
    auto x = t.param(oracle::to_f32(xv), {12});
    auto y = needs_y ? t.param(oracle::to_f32(yv), {12}) : Tensor{};
    auto out = op(t, x, y);
    auto loss = t.sum_all(t.mul(out, constant(oracle::to_f32(rv), {12})));
    t.backward(loss);
    auto analytic = oracle::to_f64(t.grad(x));
    if (needs_y) {
      auto gy = oracle::to_f64(t.grad(y));
      analytic.insert(analytic.end(), gy.begin(), gy.end());
    }
    check_grad(1e-3, oracle::compare_gradients(analytic, oracle::fd_gradient(ref, theta)));
  };

  run("relu", [](Tape& t, const Tensor& x, const Tensor&) { return t.activation(x, Act::ReLU); },
      [](double v, double) { return oracle::relu_ref(v); }, false);
  run("sigmoid",
      [](Tape& t, const Tensor& x, const Tensor&) { return t.activation(x, Act::Sigmoid); },
      [](double v, double) { return oracle::sigmoid_ref(v); }, false);
  run("tanh", [](Tape& t, const Tensor& x, const Tensor&) { return t.activation(x, Act::Tanh); },
      [](double v, double) { return std::tanh(v); }, false);
  run("affine",
      [](Tape& t, const Tensor& x, const Tensor&) { return t.affine(x, -1.5f, 0.25f); },
      [](double v, double) { return -1.5 * v + 0.25; }, false);
  run("add", [](Tape& t, const Tensor& x, const Tensor& y) { return t.add(x, y); },
      [](double a, double b) { return a + b; }, true);
  run("sub", [](Tape& t, const Tensor& x, const Tensor& y) { return t.sub(x, y); },
      [](double a, double b) { return a - b; }, true);
  run("mul", [](Tape& t, const Tensor& x, const Tensor& y) { return t.mul(x, y); },
      [](double a, double b) { return a * b; }, true);
}

TEST_CASE("gradcheck: reductions") {
  Rng rng(53);
  auto xv = rand_snapped(rng, 10, -2, 2);
  {
    auto ref = [](const std::vector<double>& th) {
      double acc = 0.0;
      for (double v : th) acc += v;
      return acc;
    };
    Tape t;
    auto x = t.param(oracle::to_f32(xv), {10});
    t.backward(t.sum_all(x));
    check_grad(1e-3, oracle::compare_gradients(oracle::to_f64(t.grad(x)),
                                               oracle::fd_gradient(ref, xv)));
  }
  {
    auto ref = [](const std::vector<double>& th) {
      double acc = 0.0;
      for (double v : th) acc += v;
      return acc / static_cast<double>(th.size());
    };
    Tape t;
    auto x = t.param(oracle::to_f32(xv), {10});
    t.backward(t.mean_all(x));
    check_grad(1e-3, oracle::compare_gradients(oracle::to_f64(t.grad(x)),
                                               oracle::fd_gradient(ref, xv)));
  }
}

TEST_CASE("gradcheck: losses") {
  Rng rng(59);
  const int B = 8;
  std::vector<double> pv(B);
  std::vector<float> yv(B);
  for (int i = 0; i < B; ++i) {
    pv[i] = oracle::snap(rng.uniform(0.05, 0.95));  // interior of the clamp
    yv[i] = rng.uniform() < 0.5 ? 0.0f : 1.0f;
  }
  auto check_loss = [&](const char* name, std::function<Tensor(Tape&, const Tensor&)> op,
                        std::function<double(double, double)> refel) {
    INFO("loss ", name);
    auto ref = [&](const std::vector<double>& th) {
      double acc = 0.0;
      for (int i = 0; i < B; ++i) acc += refel(th[i], yv[i]);
      return acc / B;
    };
    Tape t;
    auto p = t.param(oracle::to_f32(pv), {B});
    t.backward(op(t, p));
    check_grad(1e-3, oracle::compare_gradients(oracle::to_f64(t.grad(p)),
                                               oracle::fd_gradient(ref, pv, 1e-4)));
  };

  std::vector<float> y(yv.begin(), yv.end());
  check_loss("bce", [&](Tape& t, const Tensor& p) { return t.bce_loss(p, y); },
             [](double p, double yy) { return oracle::bce_ref(p, yy); });
  check_loss("mse", [&](Tape& t, const Tensor& p) { return t.mse_loss(p, y); },
             [](double p, double yy) { return oracle::mse_ref(p, yy); });
  check_loss("focal g=2", [&](Tape& t, const Tensor& p) { return t.focal_loss(p, y, 0.25f, 2.0f); },
             [](double p, double yy) { return oracle::focal_ref(p, yy, 0.25, 2.0); });
  check_loss("focal g=0", [&](Tape& t, const Tensor& p) { return t.focal_loss(p, y, 0.5f, 0.0f); },
             [](double p, double yy) { return oracle::focal_ref(p, yy, 0.5, 0.0); });
}

TEST_CASE("gradcheck: concat_channels routes gradients per branch") {
  Rng rng(61);
  const int B = 2, L = 4;
  auto av = rand_snapped(rng, B * 1 * L, -1, 1);
  auto bv = rand_snapped(rng, B * 2 * L, -1, 1);
  auto rv = rand_snapped(rng, B * 3 * L, -1, 1);
  auto ref = [&](const std::vector<double>& th) {
    // concat([B,1,L],[B,2,L]) -> [B,3,L]
    double acc = 0.0;
    for (int bi = 0; bi < B; ++bi) {
      for (int i = 0; i < L; ++i) acc += th[bi * L + i] * rv[(bi * 3 + 0) * L + i];
      for (int c = 0; c < 2; ++c)
        for (int i = 0; i < L; ++i)
          acc += th[B * L + (bi * 2 + c) * L + i] * rv[(bi * 3 + 1 + c) * L + i];
    }
    return acc;
  };
  std::vector<double> theta = av;
  theta.insert(theta.end(), bv.begin(), bv.end());

  Tape t;
  auto a = t.param(oracle::to_f32(av), {B, 1, L});
  auto b = t.param(oracle::to_f32(bv), {B, 2, L});
  auto cat = t.concat_channels({a, b});
  auto loss = t.sum_all(t.mul(cat, constant(oracle::to_f32(rv), {B, 3, L})));
  t.backward(loss);
  auto analytic = oracle::to_f64(t.grad(a));
  auto gb = oracle::to_f64(t.grad(b));
  analytic.insert(analytic.end(), gb.begin(), gb.end());
  check_grad(1e-3, oracle::compare_gradients(analytic, oracle::fd_gradient(ref, theta)));
}

TEST_CASE("dropout gradient equals its mask") {
  Tape t;
  Rng rng(67);
  const int n = 64;
  std::vector<float> xv(n, 2.0f);
  auto x = t.param(xv, {n});
  auto y = t.dropout(x, 0.25f, true, rng);
  std::vector<float> rv(n);
  Rng rr(71);
  for (auto& v : rv) v = static_cast<float>(rr.uniform(-1, 1));
  auto loss = t.sum_all(t.mul(y, constant(rv, {n})));
  t.backward(loss);
  auto& g = t.grad(x);
  for (int i = 0; i < n; ++i) {
    float mask = (*y.data)[i] / 2.0f;  // 0 or 1/(1-rate)
    CHECK(g[i] == doctest::Approx(rv[i] * mask).epsilon(1e-6));
  }
}
