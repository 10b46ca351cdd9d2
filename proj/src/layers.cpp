#include "tscx/layers.hpp"

#include "tscx/error.hpp"

namespace tscx {

Tensor dense(Tape& t, const Tensor& x, const Tensor& w, const Tensor& bias, Act act) {
  return t.activation(t.linear(x, w, bias), act);
}

Tensor residual_block(Tape& t, const Tensor& x, const ConvParams& c1, const ConvParams& c2,
                      int padding) {
  Tensor h1 = t.activation(t.conv1d(x, c1.w, c1.b, 1, padding), Act::ReLU);
  Tensor h2 = t.activation(t.conv1d(h1, c2.w, c2.b, 1, padding), Act::ReLU);
  return t.activation(t.add(h2, x), Act::ReLU);
}

namespace {

// x wx^T + h wh^T + b, the shared gate pre-activation
Tensor gate(Tape& t, const Tensor& x, const Tensor& h, const Tensor& wx, const Tensor& wh,
            const Tensor& b) {
  return t.add(t.linear(x, wx, b), t.linear(h, wh));
}

}  // namespace

RecurrentState rnn_step(Tape& t, const Tensor& x_t, const RecurrentState& s,
                        const RnnCellParams& p) {
  Tensor h = t.activation(gate(t, x_t, s.hidden, p.wx, p.wh, p.b), Act::Tanh);
  return RecurrentState{h, Tensor{}};
}

RecurrentState gru_step(Tape& t, const Tensor& x_t, const RecurrentState& s,
                        const GruCellParams& p) {
  Tensor z = t.activation(gate(t, x_t, s.hidden, p.wz, p.uz, p.bz), Act::Sigmoid);
  Tensor r = t.activation(gate(t, x_t, s.hidden, p.wr, p.ur, p.br), Act::Sigmoid);
  Tensor rh = t.mul(r, s.hidden);
  Tensor n = t.activation(t.add(t.linear(x_t, p.wh, p.bh), t.linear(rh, p.uh)), Act::Tanh);
  // h' = (1-z)*h + z*n
  Tensor keep = t.mul(t.affine(z, -1.0f, 1.0f), s.hidden);
  Tensor h = t.add(keep, t.mul(z, n));
  return RecurrentState{h, Tensor{}};
}

RecurrentState lstm_step(Tape& t, const Tensor& x_t, const RecurrentState& s,
                         const LstmCellParams& p) {
  if (s.cell.data == nullptr) fail(Errc::ShapeMismatch, "lstm_step: state has no cell tensor");
  Tensor f = t.activation(gate(t, x_t, s.hidden, p.wf, p.uf, p.bf), Act::Sigmoid);
  Tensor i = t.activation(gate(t, x_t, s.hidden, p.wi, p.ui, p.bi), Act::Sigmoid);
  Tensor o = t.activation(gate(t, x_t, s.hidden, p.wo, p.uo, p.bo), Act::Sigmoid);
  Tensor cand = t.activation(gate(t, x_t, s.hidden, p.wc, p.uc, p.bc), Act::Tanh);
  Tensor c = t.add(t.mul(f, s.cell), t.mul(i, cand));
  Tensor h = t.mul(o, t.activation(c, Act::Tanh));
  return RecurrentState{h, c};
}

RecurrentState initial_state(int batch, int width, bool with_cell) {
  RecurrentState s;
  s.hidden = zeros({batch, width});
  if (with_cell) s.cell = zeros({batch, width});
  return s;
}

std::vector<Tensor> split_steps(const Tensor& x) {
  if (x.shape.size() != 3)
    fail(Errc::ShapeMismatch, "split_steps: want [b,c,l], got " + shape_str(x.shape));
  if (x.tracked()) fail(Errc::ShapeMismatch, "split_steps: input must be untracked");
  int B = x.shape[0], C = x.shape[1], L = x.shape[2];
  std::vector<Tensor> steps;
  steps.reserve(L);
  for (int i = 0; i < L; ++i) {
    std::vector<float> v(static_cast<size_t>(B) * C);
    for (int bi = 0; bi < B; ++bi)
      for (int c = 0; c < C; ++c)
        v[static_cast<size_t>(bi) * C + c] = (*x.data)[(static_cast<size_t>(bi) * C + c) * L + i];
    steps.push_back(constant(std::move(v), {B, C}));
  }
  return steps;
}

}  // namespace tscx
