#pragma once

#include <string>
#include <vector>

#include "cadmr/graph.hpp"
#include "cadmr/matrix.hpp"
#include "cadmr/rng.hpp"

namespace cadmr {

// Two-layer modality projection: h = W1 . relu(W0 . layer_norm(x) + b0) + b1,
// with inverted dropout on the hidden activation while training. The output
// layer is linear so the latents stay unbounded for attention keys/values.
template <class S>
struct ProjectionNet {
  Parameter<S> w0, b0, w1, b1;
  double dropout_rate = 0.2;
  S layer_norm_eps = S(1e-5);

  ProjectionNet() = default;
  ProjectionNet(Eigen::Index in_dim, Eigen::Index hidden_dim, Eigen::Index out_dim,
                double dropout, RngStream& init_rng, const std::string& prefix)
      : w0(glorot_uniform<S>(in_dim, hidden_dim, init_rng), prefix + ".w0"),
        b0(Matrix<S>::Zero(1, hidden_dim), prefix + ".b0"),
        w1(glorot_uniform<S>(hidden_dim, out_dim, init_rng), prefix + ".w1"),
        b1(Matrix<S>::Zero(1, out_dim), prefix + ".b1"),
        dropout_rate(dropout) {}

  Eigen::Index in_dim() const { return w0.value.rows(); }
  Eigen::Index out_dim() const { return w1.value.cols(); }

  std::vector<Parameter<S>*> parameters() { return {&w0, &b0, &w1, &b1}; }

  Node<S>* project(Tape<S>& tape, Node<S>* x, RngStream& dropout_rng, bool training) {
    check(x->cols() == in_dim(), "project: input dim " + std::to_string(x->cols()) +
                                     " does not match net input dim " + std::to_string(in_dim()));
    Node<S>* normed = tape.layer_norm(x, layer_norm_eps);
    Node<S>* hidden = tape.relu(tape.add_row_broadcast(tape.matmul(normed, tape.leaf(w0)), tape.leaf(b0)));
    hidden = tape.dropout(hidden, dropout_rate, dropout_rng, training);
    return tape.add_row_broadcast(tape.matmul(hidden, tape.leaf(w1)), tape.leaf(b1));
  }
};

// Single-layer fusion of the concatenated modality latents:
// h_f = W . layer_norm([h_t; h_v]) + b.
template <class S>
struct FusionLayer {
  Parameter<S> w, b;
  S layer_norm_eps = S(1e-5);

  FusionLayer() = default;
  FusionLayer(Eigen::Index in_dim, Eigen::Index out_dim, RngStream& init_rng,
              const std::string& prefix)
      : w(glorot_uniform<S>(in_dim, out_dim, init_rng), prefix + ".w"),
        b(Matrix<S>::Zero(1, out_dim), prefix + ".b") {}

  Eigen::Index in_dim() const { return w.value.rows(); }
  Eigen::Index out_dim() const { return w.value.cols(); }

  std::vector<Parameter<S>*> parameters() { return {&w, &b}; }

  Node<S>* fuse(Tape<S>& tape, Node<S>* h_text, Node<S>* h_visual) {
    check(h_text->rows() == h_visual->rows(), "fuse: modality row counts differ");
    check(h_text->cols() + h_visual->cols() == in_dim(),
          "fuse: concatenated dim does not match fusion layer input");
    Node<S>* cat = tape.concat_cols({h_text, h_visual});
    Node<S>* normed = tape.layer_norm(cat, layer_norm_eps);
    return tape.add_row_broadcast(tape.matmul(normed, tape.leaf(w)), tape.leaf(b));
  }
};

// Total-correlation surrogate: mean squared off-diagonal of the batch
// column-correlation matrix. Zero exactly when the columns are pairwise
// uncorrelated in the batch, and invariant to per-column affine rescaling.
// Columns are standardized by batch mean and population std (std floored at
// 1e-8), C = Z^T Z / B, loss = sum_{d != d'} C[d][d']^2 / (D (D-1)).
template <class S>
Node<S>* tc_loss(Tape<S>& tape, Node<S>* h) {
  const Eigen::Index batch = h->rows();
  const Eigen::Index dims = h->cols();
  check(batch >= 2, "tc_loss: batch must have at least 2 rows");
  check(dims >= 1, "tc_loss: latent must have at least 1 dimension");
  if (dims == 1) return tape.constant(Matrix<S>::Zero(1, 1), "tc_zero");

  Node<S>* mean = tape.col_means(h);
  Node<S>* centered = tape.add_row_broadcast(h, tape.scale(mean, S(-1)));
  Node<S>* var = tape.col_means(tape.square(centered));
  Node<S>* stddev = tape.clamp_min(tape.sqrt_elem(var), S(1e-8));
  Node<S>* z = tape.div_row_broadcast(centered, stddev);
  Node<S>* corr = tape.scale(tape.matmul(tape.transpose(z), z), S(1) / static_cast<S>(batch));

  Matrix<S> off_mask = Matrix<S>::Ones(dims, dims);
  off_mask.diagonal().setZero();
  Node<S>* off = tape.hadamard(corr, tape.constant(std::move(off_mask), "tc_off_mask"));
  const S denom = static_cast<S>(dims) * static_cast<S>(dims - 1);
  return tape.scale(tape.sum_all(tape.square(off)), S(1) / denom);
}

}  // namespace cadmr
