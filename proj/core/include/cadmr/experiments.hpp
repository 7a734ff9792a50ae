#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cadmr/datasets.hpp"
#include "cadmr/metrics.hpp"
#include "cadmr/pipeline.hpp"

namespace cadmr {

// Ranking context for a trained arm: candidates are all items minus the
// arm's actual train items (full ranking, no negative sampling); truth is
// the fixed test fold.
inline RankingContext make_ranking_context(Matd scores, const SplitAssignment& split,
                                           std::size_t users,
                                           const std::vector<std::vector<std::size_t>>* train_override = nullptr) {
  RankingContext ctx;
  ctx.scores = std::move(scores);
  ctx.train_items = train_override ? *train_override : split.per_user_items(Fold::kTrain, users);
  ctx.test_items = split.per_user_items(Fold::kTest, users);
  return ctx;
}

namespace detail {

template <class S>
EvalReport run_single_arm_impl(const Dataset& ds, const TrainConfig& cfg, const std::string& arm,
                               const std::vector<std::size_t>& ks,
                               const std::vector<std::vector<std::size_t>>* train_override,
                               LossTrace* finetune_trace) {
  TrainingData<S> data = make_training_data<S>(ds.matrix, ds.split, ds.text, ds.visual);
  if (train_override) {
    data.rating_train.setZero();
    for (std::size_t u = 0; u < train_override->size(); ++u)
      for (std::size_t i : (*train_override)[u])
        data.rating_train(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(u)) = S(1);
  }
  ModelState<S> state(cfg, data.rating_train.rows(), data.rating_train.cols(),
                      data.text.cols(), data.visual.cols());
  pretrain_all(state, data);
  LossTrace trace = finetune(state, data);
  if (finetune_trace) *finetune_trace = trace;
  Matd scores = predict(state, data).template cast<double>();
  RankingContext ctx = make_ranking_context(std::move(scores), ds.split, ds.matrix.users,
                                            train_override);
  return evaluate_ranking(ctx, ks, arm);
}

}  // namespace detail

// Train one configuration from scratch and evaluate on the test fold.
inline EvalReport run_single_arm(const Dataset& ds, const TrainConfig& cfg, const std::string& arm,
                                 const std::vector<std::size_t>& ks = {10, 20},
                                 const std::vector<std::vector<std::size_t>>* train_override = nullptr,
                                 LossTrace* finetune_trace = nullptr) {
  if (cfg.precision == Precision::kF32)
    return detail::run_single_arm_impl<float>(ds, cfg, arm, ks, train_override, finetune_trace);
  return detail::run_single_arm_impl<double>(ds, cfg, arm, ks, train_override, finetune_trace);
}

struct ColdStartResult {
  std::vector<EvalReport> reports;          // one per fraction
  std::vector<std::size_t> excluded_users;  // users left with zero train items
};

// Training-size sweep: for each fraction, keep a seeded subsample of every
// user's train interactions, retrain from scratch, and evaluate against the
// unchanged test fold. Users whose subsample comes out empty are excluded
// from evaluation and counted.
inline ColdStartResult run_cold_start(const Dataset& ds, const TrainConfig& cfg,
                                      const std::vector<double>& fractions = {0.8, 0.6, 0.4, 0.2},
                                      const std::vector<std::size_t>& ks = {10, 20}) {
  for (double f : fractions)
    check(f > 0.0 && f <= 1.0, "cold start: fractions must lie in (0, 1]");

  const auto full_train = ds.split.per_user_items(Fold::kTrain, ds.matrix.users);
  ColdStartResult result;
  for (double fraction : fractions) {
    std::vector<std::vector<std::size_t>> reduced(full_train.size());
    std::size_t excluded = 0;
    for (std::size_t u = 0; u < full_train.size(); ++u) {
      const auto& items = full_train[u];
      const auto keep = static_cast<std::size_t>(
          std::llround(fraction * static_cast<double>(items.size())));
      if (keep >= items.size()) {
        reduced[u] = items;
        continue;
      }
      if (keep == 0 && !items.empty()) ++excluded;
      std::vector<std::size_t> pool = items;
      RngStream rng = derive_stream(cfg.seed, "cold_start/" + std::to_string(fraction) +
                                                  "/user/" + std::to_string(u));
      for (std::size_t i = pool.size(); i > 1; --i)
        std::swap(pool[i - 1], pool[static_cast<std::size_t>(rng.below(i))]);
      pool.resize(keep);
      std::sort(pool.begin(), pool.end());
      reduced[u] = std::move(pool);
    }

    // A user with no remaining train items has nothing to rank against;
    // drop them from evaluation by clearing their test set.
    EvalReport report = [&] {
      Dataset masked = ds;
      if (excluded > 0) {
        std::vector<SplitEntry> kept;
        for (const auto& e : masked.split.entries) {
          if (e.fold == Fold::kTest && reduced[e.user].empty() && !full_train[e.user].empty())
            continue;
          kept.push_back(e);
        }
        masked.split.entries = std::move(kept);
      }
      return run_single_arm(masked, cfg, "cold_start", ks, &reduced);
    }();
    report.key = fraction;
    report.key_name = "fraction";
    result.reports.push_back(std::move(report));
    result.excluded_users.push_back(excluded);
  }
  return result;
}

// Component ablation, all arms trained with identical seeds and schedules:
//   base    - full model;
//   wo_drl  - total-correlation loss removed (lambda = 0, no TC warm-up),
//             cross-attention kept;
//   wo_ca   - cross-attention bypassed, autoencoder fine-tuned directly on R.
inline std::vector<EvalReport> run_ablation(const Dataset& ds, const TrainConfig& cfg,
                                            const std::vector<std::size_t>& ks = {10, 20}) {
  std::vector<EvalReport> reports;
  reports.push_back(run_single_arm(ds, cfg, "base", ks));

  TrainConfig wo_drl = cfg;
  wo_drl.lambda_tc = 0.0;
  wo_drl.epochs_pretrain_encoder = 0;
  reports.push_back(run_single_arm(ds, wo_drl, "wo_drl", ks));

  TrainConfig wo_ca = cfg;
  wo_ca.use_attention = false;
  reports.push_back(run_single_arm(ds, wo_ca, "wo_ca", ks));
  return reports;
}

// Head-count sweep: retrain per head count with everything else fixed.
inline std::vector<EvalReport> run_heads_sweep(const Dataset& ds, const TrainConfig& cfg,
                                               const std::vector<Eigen::Index>& heads = {1, 2, 4, 8},
                                               const std::vector<std::size_t>& ks = {10, 20}) {
  for (Eigen::Index h : heads)
    check(h >= 1 && cfg.attention_dim % h == 0,
          "heads sweep: latent dim " + std::to_string(cfg.attention_dim) +
              " is not divisible by head count " + std::to_string(h));
  std::vector<EvalReport> reports;
  for (Eigen::Index h : heads) {
    TrainConfig arm_cfg = cfg;
    arm_cfg.heads = h;
    EvalReport report = run_single_arm(ds, arm_cfg, "heads_" + std::to_string(h), ks);
    report.key = static_cast<double>(h);
    report.key_name = "heads";
    reports.push_back(std::move(report));
  }
  return reports;
}

}  // namespace cadmr
