#include "cadmr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace cadmr {

double EvalReport::metric_at(std::size_t k, bool ndcg) const {
  for (const auto& r : rows)
    if (r.k == k) return ndcg ? r.ndcg : r.recall;
  throw std::out_of_range("no metrics recorded for K=" + std::to_string(k));
}

std::vector<std::size_t> rank_topk(const RankingContext& ctx, std::size_t user, std::size_t k) {
  check(k >= 1, "rank_topk: K must be >= 1");
  check(user < ctx.users(), "rank_topk: user index out of range");
  const auto& train = ctx.train_items[user];
  const std::size_t candidates = ctx.items() - train.size();
  if (k > candidates)
    throw std::invalid_argument("rank_topk: K=" + std::to_string(k) + " exceeds the " +
                                std::to_string(candidates) + " candidates left after masking");

  std::vector<std::size_t> order;
  order.reserve(candidates);
  for (std::size_t i = 0; i < ctx.items(); ++i)
    if (!std::binary_search(train.begin(), train.end(), i)) order.push_back(i);

  const auto col = static_cast<Eigen::Index>(user);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = ctx.scores(static_cast<Eigen::Index>(a), col);
                      const double sb = ctx.scores(static_cast<Eigen::Index>(b), col);
                      if (sa != sb) return sa > sb;
                      return a < b;
                    });
  order.resize(k);
  return order;
}

std::size_t evaluable_user_count(const RankingContext& ctx) {
  std::size_t n = 0;
  for (const auto& t : ctx.test_items)
    if (!t.empty()) ++n;
  return n;
}

double recall_at_k(const RankingContext& ctx, std::size_t k) {
  std::size_t evaluable = 0;
  double sum = 0.0;
  for (std::size_t u = 0; u < ctx.users(); ++u) {
    const auto& test = ctx.test_items[u];
    if (test.empty()) continue;
    ++evaluable;
    const auto topk = rank_topk(ctx, u, k);
    std::size_t hits = 0;
    for (std::size_t item : topk)
      if (std::binary_search(test.begin(), test.end(), item)) ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(test.size());
  }
  if (evaluable == 0) throw std::invalid_argument("recall_at_k: no user has a test item");
  return sum / static_cast<double>(evaluable);
}

double ndcg_at_k(const RankingContext& ctx, std::size_t k) {
  std::size_t evaluable = 0;
  double sum = 0.0;
  for (std::size_t u = 0; u < ctx.users(); ++u) {
    const auto& test = ctx.test_items[u];
    if (test.empty()) continue;
    ++evaluable;
    const auto topk = rank_topk(ctx, u, k);
    double dcg = 0.0;
    for (std::size_t rank = 0; rank < topk.size(); ++rank) {
      if (std::binary_search(test.begin(), test.end(), topk[rank]))
        dcg += 1.0 / std::log2(static_cast<double>(rank) + 2.0);
    }
    const std::size_t ideal = std::min(test.size(), k);
    double idcg = 0.0;
    for (std::size_t rank = 0; rank < ideal; ++rank)
      idcg += 1.0 / std::log2(static_cast<double>(rank) + 2.0);
    sum += dcg / idcg;
  }
  if (evaluable == 0) throw std::invalid_argument("ndcg_at_k: no user has a test item");
  return sum / static_cast<double>(evaluable);
}

EvalReport evaluate_ranking(const RankingContext& ctx, const std::vector<std::size_t>& ks,
                            const std::string& arm) {
  EvalReport report;
  report.arm = arm;
  report.evaluable_users = evaluable_user_count(ctx);
  for (std::size_t k : ks)
    report.rows.push_back({k, recall_at_k(ctx, k), ndcg_at_k(ctx, k)});
  return report;
}

void save_reports_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report file: " + path.string());
  out.precision(10);
  const bool keyed = !reports.empty() && !reports.front().key_name.empty();
  out << "arm,K,recall,ndcg,users";
  if (keyed) out << ',' << reports.front().key_name;
  out << '\n';
  for (const auto& r : reports) {
    for (const auto& row : r.rows) {
      out << r.arm << ',' << row.k << ',' << row.recall << ',' << row.ndcg << ','
          << r.evaluable_users;
      if (keyed) out << ',' << r.key;
      out << '\n';
    }
  }
}

void save_reports_json(const std::filesystem::path& path, const std::vector<EvalReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json jr{{"arm", r.arm}, {"users", r.evaluable_users}};
    if (!r.key_name.empty()) jr[r.key_name] = r.key;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows)
      rows.push_back({{"K", row.k}, {"recall", row.recall}, {"ndcg", row.ndcg}});
    jr["metrics"] = rows;
    arr.push_back(jr);
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report file: " + path.string());
  out << arr.dump(2) << '\n';
}

}  // namespace cadmr
