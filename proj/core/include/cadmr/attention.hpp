#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cadmr/graph.hpp"
#include "cadmr/matrix.hpp"
#include "cadmr/rng.hpp"

namespace cadmr {

// Multi-head cross-attention between the rating matrix (query side) and the
// fused multimodal item representation (key/value side), followed by a
// linear feed-forward back-projection to rating-matrix shape.
//
// Q = R W_Q, K = h_f W_K, V = h_f W_V, all I x l, split into n_h heads of
// width d = l / n_h; per head softmax(Q_h K_h^T / sqrt(d)) V_h over items.
// The output projection starts at zero so that, with the residual enabled,
// refinement is exactly the identity on R at initialization.
template <class S>
struct CrossAttentionBlock {
  Parameter<S> w_query, w_key, w_value, w_out, b_out;
  Eigen::Index head_count = 4;
  bool residual = true;

  CrossAttentionBlock() = default;
  CrossAttentionBlock(Eigen::Index user_dim, Eigen::Index fused_dim, Eigen::Index latent_dim,
                      Eigen::Index heads, bool use_residual, RngStream& init_rng,
                      const std::string& prefix)
      : w_query(glorot_uniform<S>(user_dim, latent_dim, init_rng), prefix + ".w_query"),
        w_key(glorot_uniform<S>(fused_dim, latent_dim, init_rng), prefix + ".w_key"),
        w_value(glorot_uniform<S>(fused_dim, latent_dim, init_rng), prefix + ".w_value"),
        w_out(Matrix<S>::Zero(latent_dim, user_dim), prefix + ".w_out"),
        b_out(Matrix<S>::Zero(1, user_dim), prefix + ".b_out"),
        head_count(heads),
        residual(use_residual) {
    check(heads >= 1, "attention: head count must be >= 1");
    check(latent_dim % heads == 0, "attention: latent dim " + std::to_string(latent_dim) +
                                       " not divisible by head count " + std::to_string(heads));
  }

  Eigen::Index latent_dim() const { return w_query.value.cols(); }
  Eigen::Index user_dim() const { return w_query.value.rows(); }
  Eigen::Index head_dim() const { return latent_dim() / head_count; }

  std::vector<Parameter<S>*> parameters() {
    return {&w_query, &w_key, &w_value, &w_out, &b_out};
  }

  // Attention output, I x l (heads concatenated).
  Node<S>* attend(Tape<S>& tape, Node<S>* rating_rows, Node<S>* fused) {
    check(rating_rows->cols() == user_dim(), "attend: rating matrix has " +
                                                 std::to_string(rating_rows->cols()) +
                                                 " user columns, block expects " +
                                                 std::to_string(user_dim()));
    check(fused->cols() == w_key.value.rows(), "attend: fused dim mismatch");
    check(rating_rows->rows() == fused->rows(), "attend: item row counts differ");

    Node<S>* queries = tape.matmul(rating_rows, tape.leaf(w_query));
    Node<S>* keys = tape.matmul(fused, tape.leaf(w_key));
    Node<S>* values = tape.matmul(fused, tape.leaf(w_value));

    const Eigen::Index d = head_dim();
    const S inv_sqrt_d = S(1) / static_cast<S>(std::sqrt(static_cast<double>(d)));
    std::vector<Node<S>*> heads;
    heads.reserve(static_cast<std::size_t>(head_count));
    for (Eigen::Index h = 0; h < head_count; ++h) {
      Node<S>* q_h = tape.slice_cols(queries, h * d, d);
      Node<S>* k_h = tape.slice_cols(keys, h * d, d);
      Node<S>* v_h = tape.slice_cols(values, h * d, d);
      Node<S>* scores = tape.scale(tape.matmul(q_h, tape.transpose(k_h)), inv_sqrt_d);
      Node<S>* weights = tape.softmax_rows(scores);
      heads.push_back(tape.matmul(weights, v_h));
    }
    return head_count == 1 ? heads[0] : tape.concat_cols(heads);
  }

  // Attention-refined rating matrix, I x U.
  Node<S>* refine(Tape<S>& tape, Node<S>* rating_rows, Node<S>* fused) {
    Node<S>* attended = attend(tape, rating_rows, fused);
    Node<S>* projected =
        tape.add_row_broadcast(tape.matmul(attended, tape.leaf(w_out)), tape.leaf(b_out));
    return residual ? tape.add(rating_rows, projected) : projected;
  }
};

}  // namespace cadmr
