#pragma once

#include <string>
#include <vector>

#include "cadmr/adam.hpp"
#include "cadmr/graph.hpp"
#include "cadmr/loss.hpp"
#include "cadmr/matrix.hpp"
#include "cadmr/rng.hpp"

namespace cadmr {

struct AEConfig {
  Eigen::Index hidden_dim = 256;
  Eigen::Index kernel_dim = 5;
  // The MSE is a mean over all entries, so these penalties must stay small
  // relative to O(1/N) data gradients.
  double lambda_weights = 1e-5;  // L2 on encoder/decoder weights
  double lambda_kernel = 1e-6;   // L2 on kernel embeddings
  double learning_rate = 1e-2;   // one full-batch step per epoch
  std::size_t epochs = 200;
};

// Item-based autoencoder with a local kernel mask on both layers. Each
// layer's effective weight is the raw weight Hadamard-multiplied by
// K[j][k] = max(0, 1 - ||u_j - v_k||^2), with u_j / v_k learned embeddings
// on the layer's input / output units. Coincident embeddings make K all
// ones and recover a plain autoencoder; embeddings further than unit
// distance cut the connection entirely.
template <class S>
struct KernelizedAE {
  Parameter<S> w_enc, b_enc, w_dec, b_dec;
  Parameter<S> enc_in_emb, enc_out_emb;  // U x d_k, H x d_k
  Parameter<S> dec_in_emb, dec_out_emb;  // H x d_k, U x d_k

  KernelizedAE() = default;
  KernelizedAE(Eigen::Index visible_dim, Eigen::Index hidden_dim, Eigen::Index kernel_dim,
               RngStream& init_rng, const std::string& prefix)
      : w_enc(glorot_uniform<S>(visible_dim, hidden_dim, init_rng), prefix + ".w_enc"),
        b_enc(Matrix<S>::Zero(1, hidden_dim), prefix + ".b_enc"),
        w_dec(glorot_uniform<S>(hidden_dim, visible_dim, init_rng), prefix + ".w_dec"),
        b_dec(Matrix<S>::Zero(1, visible_dim), prefix + ".b_dec"),
        enc_in_emb(kernel_init(visible_dim, kernel_dim, init_rng), prefix + ".enc_in_emb"),
        enc_out_emb(kernel_init(hidden_dim, kernel_dim, init_rng), prefix + ".enc_out_emb"),
        dec_in_emb(kernel_init(hidden_dim, kernel_dim, init_rng), prefix + ".dec_in_emb"),
        dec_out_emb(kernel_init(visible_dim, kernel_dim, init_rng), prefix + ".dec_out_emb") {}

  Eigen::Index visible_dim() const { return w_enc.value.rows(); }
  Eigen::Index hidden_dim() const { return w_enc.value.cols(); }

  std::vector<Parameter<S>*> parameters() {
    return {&w_enc, &b_enc, &w_dec, &b_dec,
            &enc_in_emb, &enc_out_emb, &dec_in_emb, &dec_out_emb};
  }
  std::vector<Parameter<S>*> weight_parameters() { return {&w_enc, &w_dec}; }
  std::vector<Parameter<S>*> kernel_parameters() {
    return {&enc_in_emb, &enc_out_emb, &dec_in_emb, &dec_out_emb};
  }

  // K = relu(1 - squared pairwise distance) between input- and output-side
  // embedding rows; entries land in [0, 1].
  Node<S>* kernel_matrix(Tape<S>& tape, Parameter<S>& in_emb, Parameter<S>& out_emb) {
    Node<S>* u = tape.leaf(in_emb);
    Node<S>* v = tape.leaf(out_emb);
    Node<S>* cross = tape.scale(tape.matmul(u, tape.transpose(v)), S(-2));
    Node<S>* u_sq = tape.row_sums(tape.square(u));                  // n_in x 1
    Node<S>* v_sq = tape.transpose(tape.row_sums(tape.square(v)));  // 1 x n_out
    Node<S>* dist2 = tape.add_col_broadcast(tape.add_row_broadcast(cross, v_sq), u_sq);
    return tape.relu(tape.add_scalar(tape.scale(dist2, S(-1)), S(1)));
  }

  // rows: item x U batch; reconstruction through both kernel-masked layers,
  // sigmoid activations, outputs in (0,1).
  Node<S>* forward(Tape<S>& tape, Node<S>* rows) {
    check(rows->cols() == visible_dim(), "ae_forward: input has " + std::to_string(rows->cols()) +
                                             " columns, autoencoder expects " +
                                             std::to_string(visible_dim()));
    Node<S>* w_enc_eff = tape.hadamard(tape.leaf(w_enc), kernel_matrix(tape, enc_in_emb, enc_out_emb));
    Node<S>* w_dec_eff = tape.hadamard(tape.leaf(w_dec), kernel_matrix(tape, dec_in_emb, dec_out_emb));
    Node<S>* hidden = tape.sigmoid(tape.add_row_broadcast(tape.matmul(rows, w_enc_eff), tape.leaf(b_enc)));
    return tape.sigmoid(tape.add_row_broadcast(tape.matmul(hidden, w_dec_eff), tape.leaf(b_dec)));
  }

  // Mean squared error over ALL entries (zeros included; the matrix is
  // binarized implicit feedback, so unobserved entries are true negatives
  // for reconstruction purposes) plus the two L2 penalties.
  Node<S>* loss(Tape<S>& tape, Node<S>* input_rows, const Matrix<S>& target, double lambda_weights,
                double lambda_kernel, LossBreakdown* breakdown = nullptr) {
    check(input_rows->rows() == target.rows() && input_rows->cols() == target.cols(),
          "ae_loss: input/target shape mismatch");
    Node<S>* recon = forward(tape, input_rows);
    Node<S>* diff = tape.sub(tape.constant(target, "ae_target"), recon);
    const S inv_count = S(1) / static_cast<S>(target.rows() * target.cols());
    Node<S>* mse = tape.scale(tape.sum_all(tape.square(diff)), inv_count);

    Node<S>* l2w = tape.add(tape.sum_all(tape.square(tape.leaf(w_enc))),
                            tape.sum_all(tape.square(tape.leaf(w_dec))));
    l2w = tape.scale(l2w, static_cast<S>(lambda_weights));
    Node<S>* l2k = nullptr;
    for (Parameter<S>* emb : kernel_parameters()) {
      Node<S>* term = tape.sum_all(tape.square(tape.leaf(*emb)));
      l2k = l2k ? tape.add(l2k, term) : term;
    }
    l2k = tape.scale(l2k, static_cast<S>(lambda_kernel));

    Node<S>* total = tape.add(tape.add(mse, l2w), l2k);
    if (breakdown) {
      breakdown->mse = static_cast<double>(mse->value(0, 0));
      breakdown->tc = 0.0;
      breakdown->l2_weights = static_cast<double>(l2w->value(0, 0));
      breakdown->l2_kernel = static_cast<double>(l2k->value(0, 0));
      breakdown->total = static_cast<double>(total->value(0, 0));
    }
    return total;
  }

 private:
  // Embeddings start close together so the kernel begins near all-ones
  // (an almost-plain autoencoder) with usable gradient on the distances.
  static Matrix<S> kernel_init(Eigen::Index rows, Eigen::Index kernel_dim, RngStream& rng) {
    const double a = 0.5 / std::sqrt(static_cast<double>(kernel_dim));
    Matrix<S> m(rows, kernel_dim);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < kernel_dim; ++j) m(i, j) = static_cast<S>(rng.uniform(-a, a));
    return m;
  }
};

// Full-batch Adam pretraining of the autoencoder on the rating matrix
// (input == target). Returns the per-epoch loss trace.
template <class S>
LossTrace pretrain_autoencoder(KernelizedAE<S>& ae, const Matrix<S>& rating_values,
                               const AEConfig& cfg, AdamConfig adam_cfg) {
  check(rating_values.rows() >= 1 && rating_values.cols() >= 1, "pretrain: matrix is empty");
  adam_cfg.learning_rate = cfg.learning_rate;
  AdamState<S> adam(ae.parameters(), adam_cfg);
  LossTrace trace;
  trace.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tape<S> tape;
    Node<S>* input = tape.constant(rating_values, "rating_matrix");
    LossBreakdown breakdown;
    Node<S>* total =
        ae.loss(tape, input, rating_values, cfg.lambda_weights, cfg.lambda_kernel, &breakdown);
    tape.backward(total);
    adam.step();
    trace.push_back(breakdown);
  }
  return trace;
}

}  // namespace cadmr
