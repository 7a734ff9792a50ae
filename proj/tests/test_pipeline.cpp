#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cadmr/grad_check.hpp>
#include <cadmr/pipeline.hpp>
#include <cadmr/synthetic.hpp>

#include <filesystem>
#include <fstream>

using namespace cadmr;
namespace fs = std::filesystem;

namespace {

// Small, fast configuration for pipeline-level tests.
TrainConfig tiny_config(std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.epochs_pretrain_ae = 40;
  cfg.epochs_pretrain_encoder = 5;
  cfg.epochs_finetune = 20;
  cfg.encoder_hidden = 16;
  cfg.encoder_out_text = 8;
  cfg.encoder_out_visual = 8;
  cfg.fused_dim = 8;
  cfg.attention_dim = 8;
  cfg.heads = 2;
  cfg.ae_hidden = 8;
  cfg.ae_kernel_dim = 2;
  return cfg;
}

SyntheticData tiny_data(std::uint64_t seed = 2) {
  SyntheticConfig scfg;
  scfg.users = 24;
  scfg.items = 16;
  scfg.latent_rank = 4;
  scfg.text_dim = 6;
  scfg.visual_dim = 10;
  scfg.positives_per_user = 4;
  scfg.seed = seed;
  return generate_synthetic(scfg);
}

}  // namespace

TEST_CASE("phase machine rejects out-of-order calls") {
  auto data = tiny_data();
  auto cfg = tiny_config();
  auto td = make_training_data<double>(data.dataset.matrix, data.dataset.split,
                                       data.dataset.text, data.dataset.visual);
  ModelState<double> state(cfg, 16, 24, 6, 10);

  CHECK_THROWS_AS(finetune(state, td), PhaseError);
  RngStream rng(3);
  CHECK_THROWS_AS(finetune_step(state, td, rng), PhaseError);
  CHECK_THROWS_AS(predict(state, td), PhaseError);

  pretrain_all(state, td);
  CHECK(state.phase == Phase::kPretrained);
  CHECK_THROWS_AS(pretrain_all(state, td), PhaseError);
  CHECK_THROWS_AS(predict(state, td), PhaseError);  // attention model, not finetuned yet

  finetune(state, td);
  CHECK(state.phase == Phase::kFinetuned);
  CHECK_THROWS_AS(finetune(state, td), PhaseError);
  CHECK(predict(state, td).rows() == 16);
}

TEST_CASE("pretrain traces: warm-up can be disabled; the AE trace decreases") {
  auto data = tiny_data();
  auto td = make_training_data<double>(data.dataset.matrix, data.dataset.split,
                                       data.dataset.text, data.dataset.visual);
  auto cfg = tiny_config();
  cfg.epochs_pretrain_encoder = 0;
  ModelState<double> state(cfg, 16, 24, 6, 10);
  const Matd text_w_before = state.text_net.w0.value;
  auto traces = pretrain_all(state, td);
  CHECK(traces.encoder_warmup.empty());
  CHECK(state.text_net.w0.value == text_w_before);  // encoders untouched
  REQUIRE(traces.autoencoder.size() == cfg.epochs_pretrain_ae);
  CHECK(traces.autoencoder.back().total < traces.autoencoder.front().total);
}

TEST_CASE("TC warm-up reduces the eval-mode TC loss of the encoders") {
  auto data = tiny_data(5);
  auto td = make_training_data<double>(data.dataset.matrix, data.dataset.split,
                                       data.dataset.text, data.dataset.visual);
  auto cfg = tiny_config(6);
  cfg.epochs_pretrain_encoder = 10;

  ModelState<double> state(cfg, 16, 24, 6, 10);
  RngStream unused(0);
  auto eval_tc = [&] {
    Tape<double> tape;
    auto latents = state.encode(tape, td, unused, /*training=*/false);
    return tape.add(tc_loss(tape, latents.text), tc_loss(tape, latents.visual))->value(0, 0);
  };
  const double before = eval_tc();
  auto traces = pretrain_all(state, td);
  REQUIRE(traces.encoder_warmup.size() == 10);
  const double after = eval_tc();
  CHECK(after < before);
}

TEST_CASE("lambda = 0 removes the TC contribution from the total") {
  auto data = tiny_data(7);
  auto td = make_training_data<double>(data.dataset.matrix, data.dataset.split,
                                       data.dataset.text, data.dataset.visual);
  auto cfg = tiny_config(8);
  cfg.lambda_tc = 0.0;
  ModelState<double> state(cfg, 16, 24, 6, 10);
  pretrain_all(state, td);
  RngStream rng = derive_stream(8, "dropout/finetune");
  auto b = finetune_step(state, td, rng);
  CHECK(b.tc == 0.0);
  CHECK(b.total == doctest::Approx(b.mse + b.l2_weights + b.l2_kernel).epsilon(1e-12));
}

TEST_CASE("LossBreakdown additivity holds at every fine-tune step") {
  auto data = tiny_data(9);
  auto td = make_training_data<double>(data.dataset.matrix, data.dataset.split,
                                       data.dataset.text, data.dataset.visual);
  auto cfg = tiny_config(10);
  ModelState<double> state(cfg, 16, 24, 6, 10);
  pretrain_all(state, td);
  auto trace = finetune(state, td);
  REQUIRE(trace.size() == cfg.epochs_finetune);
  for (const auto& b : trace) {
    const double reassembled = b.mse + cfg.lambda_tc * b.tc + b.l2_weights + b.l2_kernel;
    CHECK(std::abs(b.total - reassembled) < 1e-9);
  }
}

TEST_CASE("identity refinement: step-0 MSE equals the pretrained AE's reconstruction MSE") {
  auto data = tiny_data(11);
  auto td = make_training_data<double>(data.dataset.matrix, data.dataset.split,
                                       data.dataset.text, data.dataset.visual);
  auto cfg = tiny_config(12);  // residual on, w_out zero-initialized
  ModelState<double> state(cfg, 16, 24, 6, 10);
  pretrain_all(state, td);

  // reconstruction MSE of the pretrained AE on the raw training matrix
  LossBreakdown pretrained;
  {
    Tape<double> tape;
    state.ae.loss(tape, tape.constant(td.rating_train), td.rating_train, cfg.lambda_weights,
                  cfg.lambda_kernel, &pretrained);
  }
  RngStream rng = derive_stream(12, "dropout/finetune");
  auto step0 = finetune_step(state, td, rng);
  CHECK(std::abs(step0.mse - pretrained.mse) < 1e-9);
}

TEST_CASE("full-objective gradients pass grad_check on the 5-item/8-user toy") {
  SyntheticConfig scfg;
  scfg.users = 8;
  scfg.items = 5;
  scfg.latent_rank = 3;
  scfg.text_dim = 6;
  scfg.visual_dim = 10;
  scfg.positives_per_user = 2;
  scfg.seed = 13;
  auto data = generate_synthetic(scfg);
  auto td = make_training_data<double>(data.dataset.matrix, data.dataset.split,
                                       data.dataset.text, data.dataset.visual);

  TrainConfig cfg = tiny_config(14);
  cfg.attention_dim = 8;
  cfg.heads = 2;
  cfg.ae_hidden = 4;
  cfg.encoder_hidden = 8;
  cfg.encoder_out_text = 4;
  cfg.encoder_out_visual = 4;
  cfg.fused_dim = 4;
  ModelState<double> state(cfg, 5, 8, 6, 10);
  // make the output projection nontrivial so its gradient is exercised
  RngStream wout_rng(15);
  state.attention.w_out.value = glorot_uniform<double>(8, 8, wout_rng);

  RngStream unused(0);
  auto objective = [&](bool with_grad) {
    Tape<double> tape;
    auto* rating = tape.constant(td.rating_train, "rating");
    auto latents = state.encode(tape, td, unused, /*training=*/false);
    auto* refined = state.attention.refine(tape, rating, latents.fused);
    auto* recon = state.ae.forward(tape, refined);
    auto* diff = tape.sub(rating, recon);
    auto* mse = tape.scale(tape.sum_all(tape.square(diff)),
                           1.0 / static_cast<double>(td.rating_train.size()));
    auto* tc = tape.add(tc_loss(tape, latents.text), tc_loss(tape, latents.visual));
    auto* l2w = tape.scale(tape.add(tape.sum_all(tape.square(tape.leaf(state.ae.w_enc))),
                                    tape.sum_all(tape.square(tape.leaf(state.ae.w_dec)))),
                           cfg.lambda_weights);
    Node<double>* l2k = nullptr;
    for (auto* emb : state.ae.kernel_parameters()) {
      auto* term = tape.sum_all(tape.square(tape.leaf(*emb)));
      l2k = l2k ? tape.add(l2k, term) : term;
    }
    l2k = tape.scale(l2k, cfg.lambda_kernel);
    auto* total = tape.add(tape.add(tape.add(mse, tape.scale(tc, cfg.lambda_tc)), l2w), l2k);
    if (with_grad) tape.backward(total);
    return total->value(0, 0);
  };

  RngStream probe(16);
  auto report = grad_check<double>(
      state.all_parameters(), [&] { return objective(false); }, [&] { return objective(true); },
      6, probe);
  INFO("worst: ", report.worst_param, " rel err ", report.max_rel_err);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("finetune with zero epochs advances the phase and changes nothing") {
  auto data = tiny_data(17);
  auto td = make_training_data<double>(data.dataset.matrix, data.dataset.split,
                                       data.dataset.text, data.dataset.visual);
  auto cfg = tiny_config(18);
  cfg.epochs_finetune = 0;
  ModelState<double> state(cfg, 16, 24, 6, 10);
  pretrain_all(state, td);
  const Matd w_before = state.ae.w_enc.value;
  auto trace = finetune(state, td);
  CHECK(trace.empty());
  CHECK(state.phase == Phase::kFinetuned);
  CHECK(state.ae.w_enc.value == w_before);
}

TEST_CASE("finetune trace decreases and identical seeds give identical traces") {
  auto data = tiny_data(19);
  auto td = make_training_data<double>(data.dataset.matrix, data.dataset.split,
                                       data.dataset.text, data.dataset.visual);
  auto run = [&] {
    auto cfg = tiny_config(20);
    cfg.epochs_finetune = 30;
    ModelState<double> state(cfg, 16, 24, 6, 10);
    pretrain_all(state, td);
    return finetune(state, td);
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.size() == 30);
  CHECK(a.back().total < a.front().total);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].total == b[i].total);
    CHECK(a[i].mse == b[i].mse);
    CHECK(a[i].tc == b[i].tc);
  }
}

TEST_CASE("predict is deterministic, correctly shaped, and inside (0,1)") {
  auto data = tiny_data(21);
  auto td = make_training_data<double>(data.dataset.matrix, data.dataset.split,
                                       data.dataset.text, data.dataset.visual);
  auto cfg = tiny_config(22);
  ModelState<double> state(cfg, 16, 24, 6, 10);
  pretrain_all(state, td);
  finetune(state, td);
  const Matd a = predict(state, td);
  const Matd b = predict(state, td);
  CHECK(a == b);
  CHECK(a.rows() == 16);
  CHECK(a.cols() == 24);
  CHECK((a.array() > 0.0).all());
  CHECK((a.array() < 1.0).all());
}

TEST_CASE("checkpoint: save -> load -> predict is bitwise identical") {
  auto data = tiny_data(23);
  auto td = make_training_data<double>(data.dataset.matrix, data.dataset.split,
                                       data.dataset.text, data.dataset.visual);
  auto cfg = tiny_config(24);
  ModelState<double> state(cfg, 16, 24, 6, 10);
  pretrain_all(state, td);
  finetune(state, td);
  const Matd direct = predict(state, td);

  const fs::path path = fs::temp_directory_path() / "cadmr_ckpt_test.bin";
  save_checkpoint(path, state, 16, 24, 6, 10);
  auto loaded = load_checkpoint<double>(path);
  CHECK(loaded.state->phase == Phase::kFinetuned);
  CHECK(loaded.dims.items == 16);
  const Matd reloaded = predict(*loaded.state, td);
  CHECK(direct == reloaded);
  fs::remove(path);
}

TEST_CASE("checkpoint: load-then-finetune reproduces the single-process run bitwise") {
  auto data = tiny_data(25);
  auto td = make_training_data<double>(data.dataset.matrix, data.dataset.split,
                                       data.dataset.text, data.dataset.visual);
  auto cfg = tiny_config(26);

  // path A: one process, pretrain then finetune
  ModelState<double> one_shot(cfg, 16, 24, 6, 10);
  pretrain_all(one_shot, td);
  const fs::path path = fs::temp_directory_path() / "cadmr_ckpt_mid.bin";
  save_checkpoint(path, one_shot, 16, 24, 6, 10);
  auto trace_a = finetune(one_shot, td);
  const Matd predict_a = predict(one_shot, td);

  // path B: reload the pretrained checkpoint and finetune separately
  auto resumed = load_checkpoint<double>(path);
  CHECK(resumed.state->phase == Phase::kPretrained);
  auto trace_b = finetune(*resumed.state, td);
  const Matd predict_b = predict(*resumed.state, td);

  REQUIRE(trace_a.size() == trace_b.size());
  for (std::size_t i = 0; i < trace_a.size(); ++i) CHECK(trace_a[i].total == trace_b[i].total);
  CHECK(predict_a == predict_b);
  fs::remove(path);
}

TEST_CASE("checkpoint: a truncated file fails the checksum") {
  auto data = tiny_data(27);
  auto td = make_training_data<double>(data.dataset.matrix, data.dataset.split,
                                       data.dataset.text, data.dataset.visual);
  auto cfg = tiny_config(28);
  ModelState<double> state(cfg, 16, 24, 6, 10);
  pretrain_all(state, td);
  const fs::path path = fs::temp_directory_path() / "cadmr_ckpt_trunc.bin";
  save_checkpoint(path, state, 16, 24, 6, 10);

  const auto size = fs::file_size(path);
  fs::resize_file(path, size - 16);
  CHECK_THROWS_AS(load_checkpoint<double>(path), CheckpointError);
  fs::remove(path);

  CHECK_THROWS_AS(load_checkpoint<double>("/nonexistent/ckpt.bin"), CheckpointError);
}

TEST_CASE("w/o-CA mode: predictions depend only on the autoencoder parameters") {
  auto data = tiny_data(29);
  auto td = make_training_data<double>(data.dataset.matrix, data.dataset.split,
                                       data.dataset.text, data.dataset.visual);
  auto cfg = tiny_config(30);
  cfg.use_attention = false;
  ModelState<double> state(cfg, 16, 24, 6, 10);
  pretrain_all(state, td);
  finetune(state, td);
  const Matd base = predict(state, td);
  // zeroing every encoder/fusion/attention weight must change nothing
  state.text_net.w0.value.setZero();
  state.visual_net.w1.value.setZero();
  state.fusion.w.value.setZero();
  state.attention.w_query.value.setZero();
  CHECK(predict(state, td) == base);

  // pretrained-only predict is allowed on this path
  ModelState<double> fresh(cfg, 16, 24, 6, 10);
  pretrain_all(fresh, td);
  CHECK(predict(fresh, td).rows() == 16);
}

TEST_CASE("float32 pipeline runs end to end and stays finite") {
  auto data = tiny_data(31);
  auto cfg = tiny_config(32);
  cfg.precision = Precision::kF32;
  auto td = make_training_data<float>(data.dataset.matrix, data.dataset.split,
                                      data.dataset.text, data.dataset.visual);
  ModelState<float> state(cfg, 16, 24, 6, 10);
  pretrain_all(state, td);
  auto trace = finetune(state, td);
  CHECK(trace.back().total < trace.front().total);
  const Matrix<float> scores = predict(state, td);
  CHECK(scores.allFinite());
}
