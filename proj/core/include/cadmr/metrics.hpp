#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "cadmr/matrix.hpp"

namespace cadmr {

// Everything needed to rank for one experiment arm: the score matrix plus
// each user's train items (masked out of the candidate set) and test items
// (the ground truth). Train and test sets are disjoint per user.
struct RankingContext {
  Matd scores;  // I x U
  std::vector<std::vector<std::size_t>> train_items;  // per user, ascending
  std::vector<std::vector<std::size_t>> test_items;   // per user, ascending

  std::size_t items() const { return static_cast<std::size_t>(scores.rows()); }
  std::size_t users() const { return static_cast<std::size_t>(scores.cols()); }
};

struct MetricRow {
  std::size_t k = 0;
  double recall = 0.0;
  double ndcg = 0.0;
};

struct EvalReport {
  std::string arm = "base";
  // Sweep key, when applicable (train fraction or head count).
  double key = 0.0;
  std::string key_name;
  std::vector<MetricRow> rows;  // one per K
  std::size_t evaluable_users = 0;

  double metric_at(std::size_t k, bool ndcg) const;
};

// Top-K item indices for one user: descending score, the user's train items
// excluded, ties broken by ascending item index.
std::vector<std::size_t> rank_topk(const RankingContext& ctx, std::size_t user, std::size_t k);

// Mean of |topK intersect test| / |test| over users with nonempty test sets.
double recall_at_k(const RankingContext& ctx, std::size_t k);

// Binary-relevance NDCG: DCG = sum (2^rel - 1) / log2(rank + 1), iDCG from
// the ideal list truncated at min(|test|, K); mean over evaluable users.
double ndcg_at_k(const RankingContext& ctx, std::size_t k);

std::size_t evaluable_user_count(const RankingContext& ctx);

EvalReport evaluate_ranking(const RankingContext& ctx, const std::vector<std::size_t>& ks,
                            const std::string& arm);

void save_reports_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports);
void save_reports_json(const std::filesystem::path& path, const std::vector<EvalReport>& reports);

}  // namespace cadmr
