#pragma once

#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadmr/adam.hpp"
#include "cadmr/attention.hpp"
#include "cadmr/autoencoder.hpp"
#include "cadmr/checkpoint.hpp"
#include "cadmr/datasets.hpp"
#include "cadmr/encoder.hpp"
#include "cadmr/graph.hpp"
#include "cadmr/loss.hpp"
#include "cadmr/rng.hpp"

namespace cadmr {

enum class Precision { kF32, kF64 };

inline const char* precision_name(Precision p) { return p == Precision::kF32 ? "f32" : "f64"; }
inline Precision precision_from_name(const std::string& s) {
  if (s == "f32") return Precision::kF32;
  if (s == "f64") return Precision::kF64;
  throw std::invalid_argument("unknown precision '" + s + "' (expected f32 or f64)");
}

struct TrainConfig {
  // phase schedule
  std::size_t epochs_pretrain_ae = 200;
  std::size_t epochs_pretrain_encoder = 10;
  std::size_t epochs_finetune = 200;
  // Full-batch training takes one optimizer step per epoch, so the phase
  // learning rates sit higher than the usual minibatch 1e-3.
  double lr_pretrain_ae = 1e-2;
  double lr_pretrain_encoder = 1e-2;
  double lr_finetune = 1e-2;
  // objective
  double lambda_tc = 0.5;
  // The reconstruction term is a mean over all I*U entries, so its
  // per-weight gradients are O(1/N); the L2 penalties have to be small or
  // they flatten the model into the constant predictor.
  double lambda_weights = 1e-5;
  double lambda_kernel = 1e-6;
  double dropout_rate = 0.2;
  // architecture
  Eigen::Index heads = 4;
  Eigen::Index attention_dim = 64;
  Eigen::Index encoder_hidden = 256;
  Eigen::Index encoder_out_text = 64;
  Eigen::Index encoder_out_visual = 64;
  Eigen::Index fused_dim = 64;
  Eigen::Index ae_hidden = 256;
  Eigen::Index ae_kernel_dim = 5;
  bool residual = true;
  // Ablation switch: false bypasses cross-attention entirely (the
  // autoencoder fine-tunes directly on R and the encoders stay inert).
  bool use_attention = true;
  // Fine-tune batching over item rows: 0 trains full-batch; a positive
  // value samples that many item rows per step, with TC and attention
  // computed within the batch.
  Eigen::Index finetune_batch_items = 0;
  // bookkeeping
  std::uint64_t seed = 0;
  Precision precision = Precision::kF64;
  AdamConfig adam;  // learning_rate is overridden per phase

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

inline nlohmann::json TrainConfig::to_json() const {
  return nlohmann::json{{"epochs_pretrain_ae", epochs_pretrain_ae},
                        {"epochs_pretrain_encoder", epochs_pretrain_encoder},
                        {"epochs_finetune", epochs_finetune},
                        {"lr_pretrain_ae", lr_pretrain_ae},
                        {"lr_pretrain_encoder", lr_pretrain_encoder},
                        {"lr_finetune", lr_finetune},
                        {"lambda_tc", lambda_tc},
                        {"lambda_weights", lambda_weights},
                        {"lambda_kernel", lambda_kernel},
                        {"dropout_rate", dropout_rate},
                        {"heads", heads},
                        {"attention_dim", attention_dim},
                        {"encoder_hidden", encoder_hidden},
                        {"encoder_out_text", encoder_out_text},
                        {"encoder_out_visual", encoder_out_visual},
                        {"fused_dim", fused_dim},
                        {"ae_hidden", ae_hidden},
                        {"ae_kernel_dim", ae_kernel_dim},
                        {"residual", residual},
                        {"use_attention", use_attention},
                        {"finetune_batch_items", finetune_batch_items},
                        {"seed", seed},
                        {"precision", precision_name(precision)},
                        {"adam_beta1", adam.beta1},
                        {"adam_beta2", adam.beta2},
                        {"adam_epsilon", adam.epsilon}};
}

inline TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("epochs_pretrain_ae", c.epochs_pretrain_ae);
  get("epochs_pretrain_encoder", c.epochs_pretrain_encoder);
  get("epochs_finetune", c.epochs_finetune);
  get("lr_pretrain_ae", c.lr_pretrain_ae);
  get("lr_pretrain_encoder", c.lr_pretrain_encoder);
  get("lr_finetune", c.lr_finetune);
  get("lambda_tc", c.lambda_tc);
  get("lambda_weights", c.lambda_weights);
  get("lambda_kernel", c.lambda_kernel);
  get("dropout_rate", c.dropout_rate);
  get("heads", c.heads);
  get("attention_dim", c.attention_dim);
  get("encoder_hidden", c.encoder_hidden);
  get("encoder_out_text", c.encoder_out_text);
  get("encoder_out_visual", c.encoder_out_visual);
  get("fused_dim", c.fused_dim);
  get("ae_hidden", c.ae_hidden);
  get("ae_kernel_dim", c.ae_kernel_dim);
  get("residual", c.residual);
  get("use_attention", c.use_attention);
  get("finetune_batch_items", c.finetune_batch_items);
  get("seed", c.seed);
  if (j.contains("precision")) c.precision = precision_from_name(j.at("precision").get<std::string>());
  get("adam_beta1", c.adam.beta1);
  get("adam_beta2", c.adam.beta2);
  get("adam_epsilon", c.adam.epsilon);
  return c;
}

enum class Phase { kInitialized, kPretrained, kFinetuned };

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::kInitialized: return "initialized";
    case Phase::kPretrained: return "pretrained";
    case Phase::kFinetuned: return "finetuned";
  }
  return "?";
}

inline Phase phase_from_name(const std::string& s) {
  if (s == "initialized") return Phase::kInitialized;
  if (s == "pretrained") return Phase::kPretrained;
  if (s == "finetuned") return Phase::kFinetuned;
  throw std::invalid_argument("unknown phase '" + s + "'");
}

struct PhaseError : std::logic_error {
  explicit PhaseError(const std::string& what) : std::logic_error(what) {}
};

// Model-side view of a prepared dataset: the training fold of the rating
// matrix plus the item-aligned modality features, at engine precision.
template <class S>
struct TrainingData {
  Matrix<S> rating_train;  // I x U
  Matrix<S> text;          // I x D_t
  Matrix<S> visual;        // I x D_v
};

template <class S>
TrainingData<S> make_training_data(const RatingMatrix& matrix, const SplitAssignment& split,
                                   const ModalityFeatures& text, const ModalityFeatures& visual) {
  check(text.matrix.rows() == matrix.values.rows() && visual.matrix.rows() == matrix.values.rows(),
        "training data: feature row count must equal item count");
  TrainingData<S> d;
  d.rating_train = split.fold_matrix(Fold::kTrain, matrix.items, matrix.users).template cast<S>();
  d.text = text.matrix.template cast<S>();
  d.visual = visual.matrix.template cast<S>();
  return d;
}

// All learnable state for one CADMR run: the two modality encoders, the
// fusion layer, the cross-attention block, the kernelized autoencoder, the
// per-phase optimizer, and the phase marker. Pinned in place because the
// optimizer holds pointers into the parameter members.
template <class S>
struct ModelState {
  TrainConfig config;
  ProjectionNet<S> text_net;
  ProjectionNet<S> visual_net;
  FusionLayer<S> fusion;
  CrossAttentionBlock<S> attention;
  KernelizedAE<S> ae;
  Phase phase = Phase::kInitialized;
  std::unique_ptr<AdamState<S>> finetune_opt;
  RngStream finetune_dropout_rng;
  RngStream finetune_batch_rng;

  ModelState(const ModelState&) = delete;
  ModelState& operator=(const ModelState&) = delete;

  ModelState(const TrainConfig& cfg, Eigen::Index items, Eigen::Index users,
             Eigen::Index text_dim, Eigen::Index visual_dim)
      : config(cfg) {
    (void)items;
    RngStream init_rng = derive_stream(cfg.seed, "init");
    text_net = ProjectionNet<S>(text_dim, cfg.encoder_hidden, cfg.encoder_out_text,
                                cfg.dropout_rate, init_rng, "text_net");
    visual_net = ProjectionNet<S>(visual_dim, cfg.encoder_hidden, cfg.encoder_out_visual,
                                  cfg.dropout_rate, init_rng, "visual_net");
    fusion = FusionLayer<S>(cfg.encoder_out_text + cfg.encoder_out_visual, cfg.fused_dim,
                            init_rng, "fusion");
    attention = CrossAttentionBlock<S>(users, cfg.fused_dim, cfg.attention_dim, cfg.heads,
                                       cfg.residual, init_rng, "attention");
    ae = KernelizedAE<S>(users, cfg.ae_hidden, cfg.ae_kernel_dim, init_rng, "ae");
  }

  std::vector<Parameter<S>*> encoder_parameters() {
    std::vector<Parameter<S>*> out = text_net.parameters();
    for (auto* p : visual_net.parameters()) out.push_back(p);
    return out;
  }

  // Stable order; checkpoint blobs and optimizer moments rely on it.
  std::vector<Parameter<S>*> all_parameters() {
    std::vector<Parameter<S>*> out = encoder_parameters();
    for (auto* p : fusion.parameters()) out.push_back(p);
    for (auto* p : attention.parameters()) out.push_back(p);
    for (auto* p : ae.parameters()) out.push_back(p);
    return out;
  }

  // What fine-tuning actually updates: everything, unless attention is
  // bypassed, in which case only the autoencoder trains.
  std::vector<Parameter<S>*> trainable_parameters() {
    if (!config.use_attention) return ae.parameters();
    return all_parameters();
  }

  // Encoder + fusion forward on the modality features.
  struct Latents {
    Node<S>* text = nullptr;
    Node<S>* visual = nullptr;
    Node<S>* fused = nullptr;
  };

  Latents encode(Tape<S>& tape, const TrainingData<S>& data, RngStream& dropout_rng,
                 bool training) {
    Latents l;
    l.text = text_net.project(tape, tape.constant(data.text, "text_features"), dropout_rng, training);
    l.visual =
        visual_net.project(tape, tape.constant(data.visual, "visual_features"), dropout_rng, training);
    l.fused = fusion.fuse(tape, l.text, l.visual);
    return l;
  }
};

struct PretrainTraces {
  LossTrace autoencoder;
  LossTrace encoder_warmup;
};

// Phase one: the autoencoder learns to reconstruct R, and the encoders get
// a short total-correlation-only warm-up. Both are deterministic given the
// config seed.
template <class S>
PretrainTraces pretrain_all(ModelState<S>& state, const TrainingData<S>& data) {
  if (state.phase != Phase::kInitialized)
    throw PhaseError(std::string("pretrain_all: expected phase 'initialized', have '") +
                     phase_name(state.phase) + "'");
  const TrainConfig& cfg = state.config;

  PretrainTraces traces;
  AEConfig ae_cfg{cfg.ae_hidden, cfg.ae_kernel_dim, cfg.lambda_weights, cfg.lambda_kernel,
                  cfg.lr_pretrain_ae, cfg.epochs_pretrain_ae};
  traces.autoencoder = pretrain_autoencoder(state.ae, data.rating_train, ae_cfg, cfg.adam);

  if (cfg.epochs_pretrain_encoder > 0 && cfg.use_attention) {
    AdamConfig warm_cfg = cfg.adam;
    warm_cfg.learning_rate = cfg.lr_pretrain_encoder;
    AdamState<S> adam(state.encoder_parameters(), warm_cfg);
    RngStream dropout_rng = derive_stream(cfg.seed, "dropout/warmup");
    for (std::size_t epoch = 0; epoch < cfg.epochs_pretrain_encoder; ++epoch) {
      Tape<S> tape;
      auto latents = state.encode(tape, data, dropout_rng, /*training=*/true);
      Node<S>* tc = tape.add(tc_loss(tape, latents.text), tc_loss(tape, latents.visual));
      tape.backward(tc);
      adam.step();
      LossBreakdown b;
      b.tc = static_cast<double>(tc->value(0, 0));
      b.total = b.tc;  // warm-up objective is the raw TC loss
      traces.encoder_warmup.push_back(b);
    }
  }

  state.phase = Phase::kPretrained;
  state.finetune_dropout_rng = derive_stream(cfg.seed, "dropout/finetune");
  state.finetune_batch_rng = derive_stream(cfg.seed, "batch/finetune");
  return traces;
}

// One fine-tuning step under the composite objective
//   L = MSE(AE(refine(R, h_f)), R) + lambda * (TC(h_t) + TC(h_v)) + L2 terms,
// followed by a single Adam update over every trainable parameter. With
// finetune_batch_items > 0 the step runs on a sampled subset of item rows;
// TC and attention are computed within the batch.
template <class S>
LossBreakdown finetune_step(ModelState<S>& state, const TrainingData<S>& data, RngStream& rng) {
  if (state.phase != Phase::kPretrained && state.phase != Phase::kFinetuned)
    throw PhaseError(std::string("finetune_step: expected phase 'pretrained' or 'finetuned', have '") +
                     phase_name(state.phase) + "'");
  const TrainConfig& cfg = state.config;
  if (!state.finetune_opt) {
    AdamConfig opt_cfg = cfg.adam;
    opt_cfg.learning_rate = cfg.lr_finetune;
    state.finetune_opt = std::make_unique<AdamState<S>>(state.trainable_parameters(), opt_cfg);
  }

  const Eigen::Index total_items = data.rating_train.rows();
  Matrix<S> rating_rows = data.rating_train;
  Matrix<S> text_rows = data.text;
  Matrix<S> visual_rows = data.visual;
  if (cfg.finetune_batch_items > 0 && cfg.finetune_batch_items < total_items) {
    check(cfg.finetune_batch_items >= 2, "finetune: batch must hold at least 2 item rows");
    std::vector<Eigen::Index> pool(static_cast<std::size_t>(total_items));
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t i = pool.size(); i > 1; --i)
      std::swap(pool[i - 1], pool[static_cast<std::size_t>(state.finetune_batch_rng.below(i))]);
    const auto batch = static_cast<std::size_t>(cfg.finetune_batch_items);
    rating_rows.resize(cfg.finetune_batch_items, data.rating_train.cols());
    text_rows.resize(cfg.finetune_batch_items, data.text.cols());
    visual_rows.resize(cfg.finetune_batch_items, data.visual.cols());
    for (std::size_t b = 0; b < batch; ++b) {
      rating_rows.row(static_cast<Eigen::Index>(b)) = data.rating_train.row(pool[b]);
      text_rows.row(static_cast<Eigen::Index>(b)) = data.text.row(pool[b]);
      visual_rows.row(static_cast<Eigen::Index>(b)) = data.visual.row(pool[b]);
    }
  }

  Tape<S> tape;
  Node<S>* rating = tape.constant(rating_rows, "rating_train");
  Node<S>* ae_input = rating;
  Node<S>* tc_sum = nullptr;
  if (cfg.use_attention) {
    Node<S>* h_text = state.text_net.project(tape, tape.constant(text_rows, "text_features"),
                                             rng, /*training=*/true);
    Node<S>* h_visual = state.visual_net.project(
        tape, tape.constant(visual_rows, "visual_features"), rng, /*training=*/true);
    Node<S>* fused = state.fusion.fuse(tape, h_text, h_visual);
    ae_input = state.attention.refine(tape, rating, fused);
    if (cfg.lambda_tc != 0.0)
      tc_sum = tape.add(tc_loss(tape, h_text), tc_loss(tape, h_visual));
  }
  Node<S>* recon = state.ae.forward(tape, ae_input);
  Node<S>* diff = tape.sub(rating, recon);
  const S inv_count = S(1) / static_cast<S>(rating_rows.size());
  Node<S>* mse = tape.scale(tape.sum_all(tape.square(diff)), inv_count);

  Node<S>* l2w = tape.scale(tape.add(tape.sum_all(tape.square(tape.leaf(state.ae.w_enc))),
                                     tape.sum_all(tape.square(tape.leaf(state.ae.w_dec)))),
                            static_cast<S>(cfg.lambda_weights));
  Node<S>* l2k = nullptr;
  for (Parameter<S>* emb : state.ae.kernel_parameters()) {
    Node<S>* term = tape.sum_all(tape.square(tape.leaf(*emb)));
    l2k = l2k ? tape.add(l2k, term) : term;
  }
  l2k = tape.scale(l2k, static_cast<S>(cfg.lambda_kernel));

  Node<S>* total = tape.add(mse, l2w);
  if (tc_sum) total = tape.add(total, tape.scale(tc_sum, static_cast<S>(cfg.lambda_tc)));
  total = tape.add(total, l2k);

  tape.backward(total);
  state.finetune_opt->step();

  LossBreakdown b;
  b.total = static_cast<double>(total->value(0, 0));
  b.mse = static_cast<double>(mse->value(0, 0));
  b.tc = tc_sum ? static_cast<double>(tc_sum->value(0, 0)) : 0.0;
  b.l2_weights = static_cast<double>(l2w->value(0, 0));
  b.l2_kernel = static_cast<double>(l2k->value(0, 0));
  return b;
}

template <class S>
LossTrace finetune(ModelState<S>& state, const TrainingData<S>& data) {
  if (state.phase != Phase::kPretrained)
    throw PhaseError(std::string("finetune: expected phase 'pretrained', have '") +
                     phase_name(state.phase) + "'");
  LossTrace trace;
  trace.reserve(state.config.epochs_finetune);
  for (std::size_t epoch = 0; epoch < state.config.epochs_finetune; ++epoch)
    trace.push_back(finetune_step(state, data, state.finetune_dropout_rng));
  state.phase = Phase::kFinetuned;
  return trace;
}

// Deterministic eval-mode scores, I x U in (0,1). A pretrained-only model
// may be scored when attention is bypassed (the w/o-CA path); otherwise
// fine-tuning must have run.
template <class S>
Matrix<S> predict(ModelState<S>& state, const TrainingData<S>& data) {
  if (state.phase == Phase::kInitialized)
    throw PhaseError("predict: model has not been trained");
  if (state.phase == Phase::kPretrained && state.config.use_attention)
    throw PhaseError("predict: attention model must be fine-tuned before scoring");
  Tape<S> tape;
  RngStream unused(0);
  Node<S>* rating = tape.constant(data.rating_train, "rating_train");
  Node<S>* ae_input = rating;
  if (state.config.use_attention) {
    auto latents = state.encode(tape, data, unused, /*training=*/false);
    ae_input = state.attention.refine(tape, rating, latents.fused);
  }
  return state.ae.forward(tape, ae_input)->value;
}

// --- checkpointing ---------------------------------------------------------

template <class S>
void save_checkpoint(const std::filesystem::path& path, ModelState<S>& state,
                     Eigen::Index items, Eigen::Index users, Eigen::Index text_dim,
                     Eigen::Index visual_dim) {
  CheckpointFile file;
  nlohmann::json header{{"config", state.config.to_json()},
                        {"phase", phase_name(state.phase)},
                        {"items", items},
                        {"users", users},
                        {"text_dim", text_dim},
                        {"visual_dim", visual_dim}};
  file.json_header = header.dump();
  for (Parameter<S>* p : state.all_parameters())
    file.blobs.push_back({p->name, p->value.template cast<double>()});
  write_checkpoint_file(path, file);
}

struct CheckpointDims {
  Eigen::Index items = 0, users = 0, text_dim = 0, visual_dim = 0;
};

template <class S>
struct LoadedCheckpoint {
  std::unique_ptr<ModelState<S>> state;
  CheckpointDims dims;
};

template <class S>
LoadedCheckpoint<S> load_checkpoint(const std::filesystem::path& path) {
  CheckpointFile file = read_checkpoint_file(path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(file.json_header);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  TrainConfig cfg = TrainConfig::from_json(header.at("config"));
  CheckpointDims dims;
  dims.items = header.at("items").get<Eigen::Index>();
  dims.users = header.at("users").get<Eigen::Index>();
  dims.text_dim = header.at("text_dim").get<Eigen::Index>();
  dims.visual_dim = header.at("visual_dim").get<Eigen::Index>();

  auto state = std::make_unique<ModelState<S>>(cfg, dims.items, dims.users, dims.text_dim,
                                               dims.visual_dim);
  state->phase = phase_from_name(header.at("phase").get<std::string>());
  state->finetune_dropout_rng = derive_stream(cfg.seed, "dropout/finetune");
  state->finetune_batch_rng = derive_stream(cfg.seed, "batch/finetune");
  for (Parameter<S>* p : state->all_parameters()) {
    const CheckpointBlob* blob = file.find(p->name);
    if (!blob) throw CheckpointError("checkpoint is missing parameter '" + p->name + "'");
    if (blob->data.rows() != p->value.rows() || blob->data.cols() != p->value.cols())
      throw CheckpointError("checkpoint parameter '" + p->name + "' has shape " +
                            shape_str(blob->data) + ", expected " + shape_str(p->value));
    p->value = blob->data.template cast<S>();
    p->zero_grad();
  }
  return {std::move(state), dims};
}

}  // namespace cadmr
