#pragma once

#include <vector>

#include "tscx/tensor.hpp"

namespace tscx {

/// Hidden (and, for LSTM, cell) state threaded through a recurrent scan.
struct RecurrentState {
  Tensor hidden;  // [batch, width]
  Tensor cell;    // [batch, width]; data == nullptr for RNN/GRU
};

/// act(x * w^T + bias). w is [width, in], bias [width].
Tensor dense(Tape& t, const Tensor& x, const Tensor& w, const Tensor& bias, Act act);

struct ConvParams {
  Tensor w;  // [c_out, c_in, k]
  Tensor b;  // [c_out]
};

/// h1 = ReLU(conv(x)); h2 = ReLU(conv(h1)); ReLU(h2 + x).
/// Convs use stride 1 and `padding` chosen by the caller so shapes match.
Tensor residual_block(Tape& t, const Tensor& x, const ConvParams& c1, const ConvParams& c2,
                      int padding);

struct RnnCellParams {
  Tensor wx;  // [width, in]
  Tensor wh;  // [width, width]
  Tensor b;   // [width]
};

/// h_t = tanh(wx x_t + wh h_{t-1} + b).
RecurrentState rnn_step(Tape& t, const Tensor& x_t, const RecurrentState& s,
                        const RnnCellParams& p);

struct GruCellParams {
  Tensor wz, uz, bz;  // update gate
  Tensor wr, ur, br;  // reset gate
  Tensor wh, uh, bh;  // candidate
};

/// z = sig(wz x + uz h + bz); r = sig(wr x + ur h + br);
/// n = tanh(wh x + uh (r*h) + bh); h' = (1-z)*h + z*n.
RecurrentState gru_step(Tape& t, const Tensor& x_t, const RecurrentState& s,
                        const GruCellParams& p);

struct LstmCellParams {
  Tensor wf, uf, bf;  // forget gate
  Tensor wi, ui, bi;  // input gate
  Tensor wo, uo, bo;  // output gate
  Tensor wc, uc, bc;  // candidate
};

/// f,i,o = sig(gates); c~ = tanh(...); c' = f*c + i*c~; h' = o*tanh(c').
RecurrentState lstm_step(Tape& t, const Tensor& x_t, const RecurrentState& s,
                         const LstmCellParams& p);

/// Zero-initialized state for a batch.
RecurrentState initial_state(int batch, int width, bool with_cell);

/// Splits an untracked [batch, channels, length] input into per-step
/// [batch, channels] constants for a recurrent scan.
std::vector<Tensor> split_steps(const Tensor& x);

}  // namespace tscx
