#include "jseg/encoder.hpp"

#include <algorithm>

namespace jseg {

namespace {

Matrix sigmoid(const Matrix& m) { return (1.0 + (-m.array()).exp()).inverse().matrix(); }

struct StepCache {
  Matrix h_prev, z, r, c;
};

// Processes one direction; `reverse` walks each sentence right to left. State
// of a sentence is frozen (and its output ignored) on steps past its length.
std::vector<Matrix> run_direction(std::span<const Matrix> inputs, const std::vector<int>& lengths,
                                  int steps, const GruParams& p, bool reverse,
                                  BiGruTrace::Direction* trace) {
  const int batch = static_cast<int>(inputs.size());
  const int S = p.state_dim();
  std::vector<Matrix> projected(inputs.size());
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    projected[b] = inputs[b] * p.W.transpose();
    projected[b].rowwise() += p.b.transpose();
  }
  std::vector<Matrix> outputs(inputs.size());
  for (std::size_t b = 0; b < inputs.size(); ++b) outputs[b].resize(lengths[b], S);

  Matrix h = Matrix::Zero(batch, S);
  Matrix pre(batch, 3 * S);
  if (trace) {
    trace->h_prev.clear();
    trace->z.clear();
    trace->r.clear();
    trace->c.clear();
  }
  for (int step = 0; step < steps; ++step) {
    // Position of this step in each sentence: left-aligned so every
    // sentence starts at its own first (or last) character.
    pre.setZero();
    for (int b = 0; b < batch; ++b) {
      if (step < lengths[b]) {
        const int t = reverse ? lengths[b] - 1 - step : step;
        pre.row(b) = projected[b].row(t);
      }
    }
    Matrix gates = h * p.U.topRows(2 * S).transpose();
    gates += pre.leftCols(2 * S);
    const Matrix z = sigmoid(gates.leftCols(S));
    const Matrix r = sigmoid(gates.rightCols(S));
    const Matrix rh = r.cwiseProduct(h);
    const Matrix c = (rh * p.U.bottomRows(S).transpose() + pre.rightCols(S)).array().tanh().matrix();
    Matrix h_next = h + z.cwiseProduct(c - h);
    for (int b = 0; b < batch; ++b) {
      if (step >= lengths[b]) h_next.row(b) = h.row(b);
    }
    if (trace) {
      trace->h_prev.push_back(h);
      trace->z.push_back(z);
      trace->r.push_back(r);
      trace->c.push_back(c);
    }
    h = std::move(h_next);
    for (int b = 0; b < batch; ++b) {
      if (step < lengths[b]) {
        const int t = reverse ? lengths[b] - 1 - step : step;
        outputs[static_cast<std::size_t>(b)].row(t) = h.row(b);
      }
    }
  }
  if (trace) trace->projected = std::move(projected);
  return outputs;
}

// Backpropagates one direction. d_out holds per-sentence gradients w.r.t. the
// pre-dropout outputs.
std::vector<Matrix> backprop_direction(const BiGruTrace::Direction& tr, std::span<const Matrix> inputs,
                                       const std::vector<int>& lengths, int steps,
                                       const std::vector<Matrix>& d_out, const GruParams& p,
                                       bool reverse, GruParams& g) {
  const int batch = static_cast<int>(inputs.size());
  const int S = p.state_dim();
  std::vector<Matrix> d_pre(inputs.size());
  for (std::size_t b = 0; b < inputs.size(); ++b) d_pre[b] = Matrix::Zero(lengths[b], 3 * S);

  const auto Uz = p.U.topRows(S);
  const auto Ur = p.U.middleRows(S, S);
  const auto Uh = p.U.bottomRows(S);
  Matrix dh_next = Matrix::Zero(batch, S);
  Matrix active(batch, 1);
  for (int step = steps - 1; step >= 0; --step) {
    Matrix dh = dh_next;
    for (int b = 0; b < batch; ++b) {
      active(b, 0) = step < lengths[b] ? 1.0 : 0.0;
      if (step < lengths[b]) {
        const int t = reverse ? lengths[b] - 1 - step : step;
        dh.row(b) += d_out[static_cast<std::size_t>(b)].row(t);
      }
    }
    const auto& h_prev = tr.h_prev[static_cast<std::size_t>(step)];
    const auto& z = tr.z[static_cast<std::size_t>(step)];
    const auto& r = tr.r[static_cast<std::size_t>(step)];
    const auto& c = tr.c[static_cast<std::size_t>(step)];

    // Rows of inactive sentences pass dh straight through.
    const Matrix dh_act = dh.array().colwise() * active.col(0).array();
    const Matrix dc_pre = dh_act.cwiseProduct(z).array() * (1.0 - c.array().square());
    const Matrix dz_pre = dh_act.cwiseProduct(c - h_prev).array() * (z.array() * (1.0 - z.array()));
    const Matrix d_rh = dc_pre * Uh;
    const Matrix dr_pre = d_rh.cwiseProduct(h_prev).array() * (r.array() * (1.0 - r.array()));

    g.U.topRows(S).noalias() += dz_pre.transpose() * h_prev;
    g.U.middleRows(S, S).noalias() += dr_pre.transpose() * h_prev;
    g.U.bottomRows(S).noalias() += dc_pre.transpose() * r.cwiseProduct(h_prev);

    Matrix dh_prev = dh - dh_act.cwiseProduct(z);
    dh_prev += d_rh.cwiseProduct(r);
    dh_prev.noalias() += dz_pre * Uz;
    dh_prev.noalias() += dr_pre * Ur;
    dh_next = std::move(dh_prev);

    for (int b = 0; b < batch; ++b) {
      if (step >= lengths[b]) continue;
      const int t = reverse ? lengths[b] - 1 - step : step;
      auto row = d_pre[static_cast<std::size_t>(b)].row(t);
      row.segment(0, S) = dz_pre.row(b);
      row.segment(S, S) = dr_pre.row(b);
      row.segment(2 * S, S) = dc_pre.row(b);
    }
  }
  std::vector<Matrix> d_inputs(inputs.size());
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    g.W.noalias() += d_pre[b].transpose() * inputs[b];
    g.b += d_pre[b].colwise().sum().transpose();
    d_inputs[b] = d_pre[b] * p.W;
  }
  return d_inputs;
}

void apply_dropout(std::vector<Matrix>& outs, double rate, Rng& rng, std::vector<Matrix>* masks) {
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  if (masks) masks->clear();
  for (auto& o : outs) {
    Matrix mask(o.rows(), o.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? scale : 0.0;
    o = o.cwiseProduct(mask);
    if (masks) masks->push_back(std::move(mask));
  }
}

}  // namespace

GruParams GruParams::zeros(int input, int state) {
  return {Matrix::Zero(3 * state, input), Matrix::Zero(3 * state, state), Vector::Zero(3 * state)};
}

Vector gru_step(const Vector& x, const Vector& h, const GruParams& p) {
  if (!x.allFinite() || !h.allFinite()) throw Error("gru_step: non-finite input");
  if (x.size() != p.input_dim() || h.size() != p.state_dim()) throw Error("gru_step: shape mismatch");
  const int S = p.state_dim();
  auto sig = [](const Vector& v) -> Vector { return (1.0 + (-v.array()).exp()).inverse().matrix(); };
  const Vector z = sig(p.W.topRows(S) * x + p.U.topRows(S) * h + p.b.head(S));
  const Vector r = sig(p.W.middleRows(S, S) * x + p.U.middleRows(S, S) * h + p.b.segment(S, S));
  const Vector c = (p.W.bottomRows(S) * x + p.U.bottomRows(S) * r.cwiseProduct(h) + p.b.tail(S))
                       .array()
                       .tanh()
                       .matrix();
  return (1.0 - z.array()).matrix().cwiseProduct(h) + z.cwiseProduct(c);
}

std::vector<Matrix> bigru_forward_batch(std::span<const Matrix> inputs, const GruParams& fwd,
                                        const GruParams& bwd, double dropout, bool training,
                                        Rng& rng, BiGruTrace* trace, int pad_to) {
  if (fwd.input_dim() != bwd.input_dim() || fwd.state_dim() != bwd.state_dim()) {
    throw Error("forward and backward GRU shapes differ");
  }
  std::vector<int> lengths;
  int steps = pad_to;
  for (const auto& x : inputs) {
    if (x.rows() == 0) throw Error("encoder input has no characters");
    if (x.cols() != fwd.input_dim()) throw Error("encoder input width does not match GRU input size");
    if (!x.allFinite()) throw Error("encoder input is not finite");
    lengths.push_back(static_cast<int>(x.rows()));
    steps = std::max(steps, lengths.back());
  }
  auto out_f = run_direction(inputs, lengths, steps, fwd, false, trace ? &trace->fwd : nullptr);
  auto out_b = run_direction(inputs, lengths, steps, bwd, true, trace ? &trace->bwd : nullptr);
  const bool drop = training && dropout > 0.0;
  if (drop) {
    apply_dropout(out_f, dropout, rng, trace ? &trace->fwd.dropout_mask : nullptr);
    apply_dropout(out_b, dropout, rng, trace ? &trace->bwd.dropout_mask : nullptr);
  } else if (trace) {
    trace->fwd.dropout_mask.clear();
    trace->bwd.dropout_mask.clear();
  }
  if (trace) {
    trace->lengths = lengths;
    trace->steps = steps;
  }
  const int S = fwd.state_dim();
  std::vector<Matrix> out(inputs.size());
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    out[b].resize(lengths[b], 2 * S);
    out[b].leftCols(S) = out_f[b];
    out[b].rightCols(S) = out_b[b];
  }
  return out;
}

std::vector<Matrix> bigru_backward_batch(const BiGruTrace& trace, std::span<const Matrix> inputs,
                                         std::span<const Matrix> d_outputs, const GruParams& fwd,
                                         const GruParams& bwd, GruParams& g_fwd, GruParams& g_bwd) {
  const int S = fwd.state_dim();
  std::vector<Matrix> d_f(inputs.size()), d_b(inputs.size());
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    d_f[b] = d_outputs[b].leftCols(S);
    d_b[b] = d_outputs[b].rightCols(S);
    if (!trace.fwd.dropout_mask.empty()) {
      d_f[b] = d_f[b].cwiseProduct(trace.fwd.dropout_mask[b]);
      d_b[b] = d_b[b].cwiseProduct(trace.bwd.dropout_mask[b]);
    }
  }
  auto dx_f = backprop_direction(trace.fwd, inputs, trace.lengths, trace.steps, d_f, fwd, false, g_fwd);
  auto dx_b = backprop_direction(trace.bwd, inputs, trace.lengths, trace.steps, d_b, bwd, true, g_bwd);
  for (std::size_t b = 0; b < inputs.size(); ++b) dx_f[b] += dx_b[b];
  return dx_f;
}

EncoderOutput bigru_forward(const Matrix& x, const GruParams& fwd, const GruParams& bwd,
                            double dropout, bool training, Rng& rng) {
  if (x.rows() == 0) throw Error("encoder input has no characters");
  const std::vector<Matrix> batch{x};
  auto out = bigru_forward_batch(batch, fwd, bwd, dropout, training, rng);
  return {std::move(out.front())};
}

}  // namespace jseg
