#pragma once

#include <span>
#include <vector>

#include "jseg/common.hpp"

namespace jseg {

/// One GRU direction. Gate blocks are stacked row-wise in the order update
/// (z), reset (r), candidate (h):
///   z  = sigmoid(W_z x + U_z h + b_z)
///   r  = sigmoid(W_r x + U_r h + b_r)
///   h~ = tanh(W_h x + U_h (r * h) + b_h)
///   h' = (1 - z) * h + z * h~
struct GruParams {
  Matrix W;  // 3*state x input
  Matrix U;  // 3*state x state
  Vector b;  // 3*state

  static GruParams zeros(int input, int state);
  int input_dim() const { return static_cast<int>(W.cols()); }
  int state_dim() const { return static_cast<int>(U.cols()); }
};

Vector gru_step(const Vector& x, const Vector& h_prev, const GruParams& p);

/// Concatenated forward and backward states, one row per character.
struct EncoderOutput {
  Matrix H;  // n x (2*state)
};

/// Per-direction step caches for a padded batch.
struct BiGruTrace {
  struct Direction {
    std::vector<Matrix> h_prev, z, r, c;  // per processed step, batch x state
    std::vector<Matrix> projected;        // per sentence, n x 3*state
    std::vector<Matrix> dropout_mask;     // per sentence, n x state (empty when off)
  };
  std::vector<int> lengths;
  int steps = 0;
  Direction fwd, bwd;
};

/// Runs both directions over a batch of sentences, padded to at least
/// `pad_to` steps. Padded positions never influence real positions. Inverted
/// dropout is applied to each direction's outputs when training.
std::vector<Matrix> bigru_forward_batch(std::span<const Matrix> inputs, const GruParams& fwd,
                                        const GruParams& bwd, double dropout, bool training,
                                        Rng& rng, BiGruTrace* trace = nullptr, int pad_to = 0);

/// Accumulates parameter gradients and returns d(loss)/d(input) per sentence.
std::vector<Matrix> bigru_backward_batch(const BiGruTrace& trace, std::span<const Matrix> inputs,
                                         std::span<const Matrix> d_outputs, const GruParams& fwd,
                                         const GruParams& bwd, GruParams& g_fwd, GruParams& g_bwd);

EncoderOutput bigru_forward(const Matrix& x, const GruParams& fwd, const GruParams& bwd,
                            double dropout, bool training, Rng& rng);

}  // namespace jseg
