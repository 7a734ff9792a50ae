#include "cadmr/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "cadmr/graph.hpp"
#include "cadmr/rng.hpp"

namespace cadmr {
namespace {

std::string padded_token(const char* prefix, std::size_t idx, std::size_t count) {
  std::size_t width = 1;
  for (std::size_t c = count; c >= 10; c /= 10) ++width;
  std::string digits = std::to_string(idx);
  return std::string(prefix) + std::string(width - digits.size(), '0') + digits;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  check(cfg.users >= 1 && cfg.items >= 1 && cfg.latent_rank >= 1 && cfg.text_dim >= 1 &&
            cfg.visual_dim >= 1,
        "synthetic: all counts must be >= 1");
  check(cfg.noise_scale >= 0.0, "synthetic: noise scale must be >= 0");
  check(cfg.positives_per_user >= 1, "synthetic: positives-per-user must be >= 1");
  if (cfg.positives_per_user > cfg.items)
    throw DataError("synthetic: positives-per-user exceeds item count");

  const auto users = static_cast<Eigen::Index>(cfg.users);
  const auto items = static_cast<Eigen::Index>(cfg.items);
  const auto rank = static_cast<Eigen::Index>(cfg.latent_rank);

  RngStream user_rng = derive_stream(cfg.seed, "synthetic/user_factors");
  RngStream item_rng = derive_stream(cfg.seed, "synthetic/item_factors");
  RngStream text_map_rng = derive_stream(cfg.seed, "synthetic/text_map");
  RngStream visual_map_rng = derive_stream(cfg.seed, "synthetic/visual_map");
  RngStream text_noise_rng = derive_stream(cfg.seed, "synthetic/text_noise");
  RngStream visual_noise_rng = derive_stream(cfg.seed, "synthetic/visual_noise");

  SyntheticData data;
  data.user_factors = normal_matrix<double>(users, rank, user_rng);
  data.item_factors = normal_matrix<double>(items, rank, item_rng);
  data.text_map = normal_matrix<double>(rank, static_cast<Eigen::Index>(cfg.text_dim), text_map_rng);
  data.visual_map =
      normal_matrix<double>(rank, static_cast<Eigen::Index>(cfg.visual_dim), visual_map_rng);

  // scores[i, u] = z_i . z_u; each user's positives are their top-q items,
  // ties broken toward the lower item index.
  Matd scores = data.item_factors * data.user_factors.transpose();
  data.dataset.matrix.items = cfg.items;
  data.dataset.matrix.users = cfg.users;
  data.dataset.matrix.values = Matd::Zero(items, users);
  std::vector<std::size_t> order(cfg.items);
  for (Eigen::Index u = 0; u < users; ++u) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores(static_cast<Eigen::Index>(a), u) > scores(static_cast<Eigen::Index>(b), u);
    });
    for (std::size_t q = 0; q < cfg.positives_per_user; ++q)
      data.dataset.matrix.values(static_cast<Eigen::Index>(order[q]), u) = 1.0;
  }

  data.dataset.text.tag = ModalityTag::kText;
  data.dataset.text.matrix = data.item_factors * data.text_map;
  data.dataset.visual.tag = ModalityTag::kVisual;
  data.dataset.visual.matrix = data.item_factors * data.visual_map;
  if (cfg.noise_scale > 0.0) {
    data.dataset.text.matrix +=
        cfg.noise_scale *
        normal_matrix<double>(items, static_cast<Eigen::Index>(cfg.text_dim), text_noise_rng);
    data.dataset.visual.matrix +=
        cfg.noise_scale *
        normal_matrix<double>(items, static_cast<Eigen::Index>(cfg.visual_dim), visual_noise_rng);
  }

  std::vector<std::string> user_tokens(cfg.users), item_tokens(cfg.items);
  for (std::size_t u = 0; u < cfg.users; ++u) user_tokens[u] = padded_token("u", u, cfg.users);
  for (std::size_t i = 0; i < cfg.items; ++i) item_tokens[i] = padded_token("i", i, cfg.items);
  data.dataset.catalog = Catalog::from_tokens(std::move(user_tokens), std::move(item_tokens));

  data.dataset.split = split_interactions(data.dataset.matrix, cfg.split_ratio, cfg.seed);
  return data;
}

}  // namespace cadmr
