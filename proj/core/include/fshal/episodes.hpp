#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fshal/feature_store.hpp"

namespace fshal {

// Generator used for every stochastic step. Recorded in results metadata.
using Rng = std::mt19937_64;
inline constexpr const char* kRngName = "mt19937_64+splitmix64-derive";

struct EpisodeSpec {
  int n_way = 5;
  int k_shot = 1;
  int m_query = 15;
  int episode_count = 1000;
  std::uint64_t master_seed = 0;
};

struct Episode {
  int index = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> class_ids;  // N distinct novel ids; label j <-> class_ids[j]

  // Raw (untransformed) rows, grouped by class: rows [j*K, (j+1)*K) belong to label j.
  Eigen::MatrixXd support;
  std::vector<int> support_labels;
  Eigen::MatrixXd query;
  std::vector<int> query_labels;

  // Row indices into each class's feature matrix, for audit.
  std::vector<std::vector<int>> support_rows;
  std::vector<std::vector<int>> query_rows;
};

// SplitMix64 finalizer. Bijective on 64-bit words.
std::uint64_t mix64(std::uint64_t x);

// Injective in `index` for a fixed master seed, and in `master_seed` for a fixed index.
std::uint64_t derive_episode_seed(std::uint64_t master_seed, std::uint64_t index);

// Throws insufficient_classes / insufficient_samples when the novel split
// cannot hold N classes of K + M samples.
void check_episode_spec(const FeatureBank& bank, const EpisodeSpec& spec);

Episode sample_episode(const FeatureBank& bank, const EpisodeSpec& spec, int index);

// Partial Fisher-Yates: `count` distinct values from [0, n), in draw order.
std::vector<int> sample_without_replacement(int n, int count, Rng& rng);

}  // namespace fshal
