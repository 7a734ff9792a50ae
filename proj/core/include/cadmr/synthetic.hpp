#pragma once

#include <cstdint>

#include "cadmr/datasets.hpp"
#include "cadmr/matrix.hpp"

namespace cadmr {

// Planted low-rank interaction model with linear modality maps: user and
// item factors are drawn from a seeded normal, each user's positives are
// the top-q scored items, and the modality features are noisy linear images
// of the item factors, so they carry real signal about the interactions.
struct SyntheticConfig {
  std::size_t users = 200;
  std::size_t items = 100;
  std::size_t latent_rank = 8;
  std::size_t text_dim = 32;
  std::size_t visual_dim = 64;
  double noise_scale = 0.1;
  std::size_t positives_per_user = 10;
  std::uint64_t seed = 0;
  SplitRatio split_ratio;
};

struct SyntheticData {
  Dataset dataset;
  // Ground truth exposed for oracle checks.
  Matd user_factors;   // U x r
  Matd item_factors;   // I x r
  Matd text_map;       // r x text_dim
  Matd visual_map;     // r x visual_dim
};

SyntheticData generate_synthetic(const SyntheticConfig& cfg);

}  // namespace cadmr
