#pragma once

// Time residual gate and the position-enhanced self-attention encoder.

#include <cmath>
#include <vector>

#include "decrl/autodiff.hpp"

namespace decrl {

struct GateParameters {
  Matrix weight;  // W_3, d x d
  Matrix bias;    // 1 x d
};

struct TemporalEncoderParameters {
  Matrix frequencies;  // 1 x d (omega)
  Matrix query;        // W_q, 2d x 2d
  Matrix key;          // W_k, 2d x 2d
};

namespace ad {

// X = sigmoid(W_3 H_prev + b); H = X * H_theta + (1 - X) * H_prev.
inline Var time_residual_gate(const Var& updated, const Var& previous, const Var& weight, const Var& bias) {
  require(updated.rows() == previous.rows() && updated.cols() == previous.cols(), ErrorKind::shape,
          "time_residual_gate: shape mismatch");
  Var gate = sigmoid(add_rowvec(matmul_nt(previous, weight), bias));
  return add(mul(gate, updated), mul(affine(gate, -1.0, 1.0), previous));
}

// Phi(t)_k = sqrt(1/d) cos(omega_k tau), a 1 x d row.
inline Var time_position_encoding(double tau, const Var& frequencies) {
  const double d = static_cast<double>(frequencies.cols());
  return scale(cos_elem(scale(frequencies, tau)), std::sqrt(1.0 / d));
}

// z^t = [H^t; Phi(t)] for every row of H^t.
inline Var position_enhance(const Var& representations, const Var& encoding) {
  Tape& t = *representations.tape();
  Var broadcast = matmul(t.constant(Matrix::Ones(representations.rows(), 1)), encoding);
  return concat_cols({representations, broadcast});
}

// Attention over a window for many independent sequences at once:
// sequence[n] holds z_n for every row. Returns h_bar for the query position
// `query_index` (one row per sequence).
inline Var attend(const std::vector<Var>& sequence, const Var& w_query, const Var& w_key, int query_index,
                  double dim) {
  require(!sequence.empty(), ErrorKind::range, "attentive_temporal_encode: empty sequence");
  require(query_index >= 0 && query_index < static_cast<int>(sequence.size()), ErrorKind::range,
          "attentive_temporal_encode: query index out of range");
  const double inv_sqrt = 1.0 / std::sqrt(dim);
  Var q = matmul_nt(sequence[static_cast<std::size_t>(query_index)], w_query);
  std::vector<Var> logits;
  for (const auto& z : sequence) logits.push_back(scale(rowsum(mul(q, matmul_nt(z, w_key))), inv_sqrt));
  Var alpha = softmax_rows(concat_cols(logits));
  Var out;
  for (std::size_t n = 0; n < sequence.size(); ++n) {
    Var term = mul_colvec(sequence[n], slice_cols(alpha, static_cast<Eigen::Index>(n), 1));
    out = out.valid() ? add(out, term) : term;
  }
  return out;
}

}  // namespace ad

inline Matrix time_residual_gate(const Matrix& updated, const Matrix* previous, const GateParameters& p) {
  if (!previous) return updated;
  ad::Tape t;
  return ad::time_residual_gate(t.constant(updated), t.constant(*previous), t.constant(p.weight),
                                t.constant(p.bias))
      .value();
}

inline RowVector time_position_encoding(double tau, const RowVector& frequencies) {
  ad::Tape t;
  Matrix f = frequencies;
  return ad::time_position_encoding(tau, t.constant(f)).value();
}

struct AttentionResult {
  Matrix weights;     // alpha, T x T (row m = query m)
  Matrix integrated;  // h_bar_m, T x 2d
};

// One sequence, rows = positions. The scale uses d = z.cols() / 2, the
// representation dimension before position enhancement.
inline AttentionResult attentive_temporal_encode(const Matrix& z, const Matrix& w_query, const Matrix& w_key) {
  require(z.rows() >= 1, ErrorKind::range, "attentive_temporal_encode: empty sequence");
  require(w_query.rows() == z.cols() && w_query.cols() == z.cols() && w_key.rows() == z.cols() &&
              w_key.cols() == z.cols(),
          ErrorKind::shape, "attentive_temporal_encode: projection shape mismatch");
  const double dim = std::max<double>(1.0, static_cast<double>(z.cols()) / 2.0);
  Matrix q = z * w_query.transpose();
  Matrix k = z * w_key.transpose();
  Matrix logits = q * k.transpose() / std::sqrt(dim);
  ad::Tape t;
  Matrix alpha = ad::softmax_rows(t.constant(logits)).value();
  return {alpha, alpha * z};
}

}  // namespace decrl
