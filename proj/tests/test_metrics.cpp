#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cadmr/metrics.hpp>
#include <cadmr/rng.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <vector>

using namespace cadmr;

namespace {

// Brute-force oracle: full sort plus set arithmetic, sharing no code with
// the implementation under test.
struct BruteForce {
  static std::vector<std::size_t> topk(const Matd& scores, const std::set<std::size_t>& train,
                                       std::size_t user, std::size_t k) {
    std::vector<std::pair<double, std::size_t>> rows;
    for (std::size_t i = 0; i < static_cast<std::size_t>(scores.rows()); ++i) {
      if (train.count(i)) continue;
      rows.push_back({scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(user)), i});
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < k && r < rows.size(); ++r) out.push_back(rows[r].second);
    return out;
  }

  static double recall(const RankingContext& ctx, std::size_t k) {
    double sum = 0.0;
    std::size_t users = 0;
    for (std::size_t u = 0; u < ctx.users(); ++u) {
      std::set<std::size_t> test(ctx.test_items[u].begin(), ctx.test_items[u].end());
      if (test.empty()) continue;
      ++users;
      std::set<std::size_t> train(ctx.train_items[u].begin(), ctx.train_items[u].end());
      auto list = topk(ctx.scores, train, u, k);
      std::size_t hits = 0;
      for (auto i : list)
        if (test.count(i)) ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(test.size());
    }
    return sum / static_cast<double>(users);
  }

  static double ndcg(const RankingContext& ctx, std::size_t k) {
    double sum = 0.0;
    std::size_t users = 0;
    for (std::size_t u = 0; u < ctx.users(); ++u) {
      std::set<std::size_t> test(ctx.test_items[u].begin(), ctx.test_items[u].end());
      if (test.empty()) continue;
      ++users;
      std::set<std::size_t> train(ctx.train_items[u].begin(), ctx.train_items[u].end());
      auto list = topk(ctx.scores, train, u, k);
      double dcg = 0.0;
      for (std::size_t pos = 0; pos < list.size(); ++pos) {
        const double rel = test.count(list[pos]) ? 1.0 : 0.0;
        dcg += (std::pow(2.0, rel) - 1.0) / std::log2(static_cast<double>(pos + 2));
      }
      double idcg = 0.0;
      for (std::size_t pos = 0; pos < std::min(test.size(), k); ++pos)
        idcg += 1.0 / std::log2(static_cast<double>(pos + 2));
      sum += dcg / idcg;
    }
    return sum / static_cast<double>(users);
  }
};

RankingContext random_context(RngStream& rng, std::size_t max_users = 50,
                              std::size_t max_items = 40) {
  const std::size_t users = 2 + rng.below(max_users - 1);
  const std::size_t items = 15 + rng.below(max_items - 14);
  RankingContext ctx;
  ctx.scores.resize(static_cast<Eigen::Index>(items), static_cast<Eigen::Index>(users));
  for (Eigen::Index i = 0; i < ctx.scores.size(); ++i)
    ctx.scores(i / static_cast<Eigen::Index>(users), i % static_cast<Eigen::Index>(users)) =
        rng.uniform();
  // occasional exact ties to exercise the tie-break rule
  if (users >= 2)
    ctx.scores.col(1) = (ctx.scores.col(1).array() * 4.0).round() / 4.0;
  ctx.train_items.resize(users);
  ctx.test_items.resize(users);
  for (std::size_t u = 0; u < users; ++u) {
    std::set<std::size_t> train, test;
    const std::size_t n_train = rng.below(4);
    const std::size_t n_test = rng.below(4);  // sometimes empty
    while (train.size() < n_train) train.insert(rng.below(items));
    while (test.size() < n_test) {
      const std::size_t i = rng.below(items);
      if (!train.count(i)) test.insert(i);
    }
    ctx.train_items[u] = {train.begin(), train.end()};
    ctx.test_items[u] = {test.begin(), test.end()};
  }
  return ctx;
}

}  // namespace

TEST_CASE("rank_topk: strictly decreasing scores with no masking") {
  RankingContext ctx;
  ctx.scores.resize(6, 1);
  ctx.scores << 9, 8, 7, 6, 5, 4;
  ctx.train_items = {{}};
  ctx.test_items = {{}};
  CHECK(rank_topk(ctx, 0, 3) == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("rank_topk: full ties resolve by ascending item index") {
  RankingContext ctx;
  ctx.scores = Matd::Constant(5, 1, 0.5);
  ctx.train_items = {{}};
  ctx.test_items = {{}};
  CHECK(rank_topk(ctx, 0, 3) == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("rank_topk: a train item holding the best score is masked out") {
  RankingContext ctx;
  ctx.scores.resize(4, 1);
  ctx.scores << 0.9, 0.8, 0.7, 0.6;
  ctx.train_items = {{0}};
  ctx.test_items = {{}};
  CHECK(rank_topk(ctx, 0, 2) == std::vector<std::size_t>{1, 2});
}

TEST_CASE("rank_topk rejects K beyond the masked candidate count") {
  RankingContext ctx;
  ctx.scores = Matd::Constant(3, 1, 1.0);
  ctx.train_items = {{0, 1}};
  ctx.test_items = {{}};
  CHECK_THROWS_AS(rank_topk(ctx, 0, 2), std::invalid_argument);
}

TEST_CASE("recall: all test items inside top-K gives 1.0") {
  RankingContext ctx;
  ctx.scores.resize(5, 1);
  ctx.scores << 0.9, 0.8, 0.7, 0.2, 0.1;
  ctx.train_items = {{}};
  ctx.test_items = {{{0, 1, 2}}};
  CHECK(recall_at_k(ctx, 3) == 1.0);
}

TEST_CASE("recall: 3 of 6 test items in the top 10 gives 0.5") {
  RankingContext ctx;
  ctx.scores.resize(20, 1);
  for (int i = 0; i < 20; ++i) ctx.scores(i, 0) = 20.0 - i;  // rank == index
  ctx.train_items = {{}};
  ctx.test_items = {{{0, 1, 2, 15, 16, 17}}};  // three inside, three outside
  CHECK(recall_at_k(ctx, 10) == 0.5);
}

TEST_CASE("ndcg: hand-evaluated [1,0,1] at K=3 with |test|=2") {
  // DCG = 1 + 0 + 1/log2(4) = 1.5; iDCG = 1 + 1/log2(3); NDCG ~ 0.9197
  RankingContext ctx;
  ctx.scores.resize(4, 1);
  ctx.scores << 0.9, 0.8, 0.7, 0.1;
  ctx.train_items = {{}};
  ctx.test_items = {{{0, 2}}};
  CHECK(ndcg_at_k(ctx, 3) == doctest::Approx(0.9197).epsilon(2e-4));
}

TEST_CASE("ndcg: ideal ranking gives exactly 1, empty top-K overlap gives 0") {
  RankingContext ctx;
  ctx.scores.resize(6, 1);
  ctx.scores << 0.9, 0.8, 0.1, 0.2, 0.3, 0.05;
  ctx.train_items = {{}};
  ctx.test_items = {{{0, 1}}};
  CHECK(ndcg_at_k(ctx, 2) == 1.0);

  ctx.test_items = {{{5}}};
  CHECK(ndcg_at_k(ctx, 2) == 0.0);
}

TEST_CASE("users with empty test folds are excluded from the means") {
  RankingContext ctx;
  ctx.scores.resize(4, 3);
  ctx.scores.setZero();
  ctx.scores(0, 0) = 1.0;  // user 0 ranks item 0 first
  ctx.train_items = {{}, {}, {}};
  ctx.test_items = {{{0}}, {}, {}};
  CHECK(evaluable_user_count(ctx) == 1);
  CHECK(recall_at_k(ctx, 1) == 1.0);  // only user 0 counts

  ctx.test_items = {{}, {}, {}};
  CHECK_THROWS_AS(recall_at_k(ctx, 1), std::invalid_argument);
  CHECK_THROWS_AS(ndcg_at_k(ctx, 1), std::invalid_argument);
}

TEST_CASE("recall and ndcg match the brute-force oracle exactly on 100 seeded instances") {
  RngStream rng(2024);
  int evaluated = 0;
  for (int trial = 0; trial < 100; ++trial) {
    RankingContext ctx = random_context(rng);
    if (evaluable_user_count(ctx) == 0) continue;
    ++evaluated;
    for (std::size_t k : {1UL, 5UL, 10UL}) {
      CHECK(recall_at_k(ctx, k) == BruteForce::recall(ctx, k));
      CHECK(ndcg_at_k(ctx, k) == BruteForce::ndcg(ctx, k));
    }
  }
  CHECK(evaluated > 90);
}

TEST_CASE("metrics are invariant under strictly increasing score transforms") {
  RngStream rng(77);
  RankingContext ctx = random_context(rng);
  if (evaluable_user_count(ctx) == 0) return;
  const double r10 = recall_at_k(ctx, 10);
  const double n10 = ndcg_at_k(ctx, 10);
  RankingContext warped = ctx;
  warped.scores = (ctx.scores.array().exp() * 3.0 + 1.0).matrix();
  CHECK(recall_at_k(warped, 10) == r10);
  CHECK(ndcg_at_k(warped, 10) == n10);
}

TEST_CASE("masking: a train item never appears in any top-K list") {
  RngStream rng(88);
  for (int trial = 0; trial < 10; ++trial) {
    RankingContext ctx = random_context(rng);
    for (std::size_t u = 0; u < ctx.users(); ++u) {
      if (ctx.train_items[u].size() + 10 > ctx.items()) continue;
      auto list = rank_topk(ctx, u, 10);
      for (auto item : list)
        CHECK(!std::binary_search(ctx.train_items[u].begin(), ctx.train_items[u].end(), item));
    }
  }
}

TEST_CASE("NDCG is 1 exactly when the top-min(|test|,K) ranks are the test items") {
  RngStream rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    RankingContext ctx = random_context(rng);
    for (std::size_t u = 0; u < ctx.users(); ++u) {
      if (ctx.test_items[u].empty()) continue;
      // force-user: give test items the top scores
      for (std::size_t r = 0; r < ctx.test_items[u].size(); ++r)
        ctx.scores(static_cast<Eigen::Index>(ctx.test_items[u][r]),
                   static_cast<Eigen::Index>(u)) = 1e6 - static_cast<double>(r);
    }
    if (evaluable_user_count(ctx) == 0) continue;
    CHECK(ndcg_at_k(ctx, 10) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("report CSV and JSON round-trip the arm labels") {
  EvalReport r;
  r.arm = "wo_ca";
  r.evaluable_users = 3;
  r.rows = {{10, 0.5, 0.25}, {20, 0.75, 0.3}};
  namespace fs = std::filesystem;
  const fs::path csv = fs::temp_directory_path() / "cadmr_reports.csv";
  save_reports_csv(csv, {r});
  std::ifstream in(csv);
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  CHECK(header == "arm,K,recall,ndcg,users");
  CHECK(line.substr(0, 6) == "wo_ca,");
  fs::remove(csv);
  CHECK(r.metric_at(10, true) == 0.25);
  CHECK(r.metric_at(20, false) == 0.75);
  CHECK_THROWS_AS(r.metric_at(30, true), std::out_of_range);
}
