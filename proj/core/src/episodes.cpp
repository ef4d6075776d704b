#include "fshal/episodes.hpp"

#include <numeric>

#include "fshal/error.hpp"

namespace fshal {

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t derive_episode_seed(std::uint64_t master_seed, std::uint64_t index) {
  constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  return mix64(mix64(master_seed) + kGolden * (index + 1));
}

std::vector<int> sample_without_replacement(int n, int count, Rng& rng) {
  if (count < 0 || count > n) {
    throw Error(ErrorCode::invalid_argument,
                "cannot draw " + std::to_string(count) + " distinct items from " + std::to_string(n));
  }
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

void check_episode_spec(const FeatureBank& bank, const EpisodeSpec& spec) {
  if (spec.n_way < 1 || spec.k_shot < 1 || spec.m_query < 1 || spec.episode_count < 1) {
    throw Error(ErrorCode::invalid_argument, "n_way, k_shot, m_query and episode_count must be positive");
  }
  const auto novel = bank.split_indices(Split::novel);
  if (static_cast<int>(novel.size()) < spec.n_way) {
    throw Error(ErrorCode::insufficient_classes, "novel split has " + std::to_string(novel.size()) +
                                                     " classes, episode needs " + std::to_string(spec.n_way));
  }
  const int per_class = spec.k_shot + spec.m_query;
  for (auto i : novel) {
    const auto& c = bank.classes[i];
    if (c.features.rows() < per_class) {
      throw Error(ErrorCode::insufficient_samples, "class '" + c.id + "' has " +
                                                       std::to_string(c.features.rows()) + " rows, needs " +
                                                       std::to_string(per_class));
    }
  }
}

Episode sample_episode(const FeatureBank& bank, const EpisodeSpec& spec, int index) {
  if (index < 0) throw Error(ErrorCode::invalid_argument, "episode index must be non-negative");
  check_episode_spec(bank, spec);

  const auto novel = bank.split_indices(Split::novel);
  const int n = spec.n_way;
  const int k = spec.k_shot;
  const int m = spec.m_query;
  const auto d = static_cast<Eigen::Index>(bank.dim);

  Episode ep;
  ep.index = index;
  ep.seed = derive_episode_seed(spec.master_seed, static_cast<std::uint64_t>(index));
  Rng rng(ep.seed);

  const auto chosen = sample_without_replacement(static_cast<int>(novel.size()), n, rng);
  ep.support.resize(n * k, d);
  ep.query.resize(n * m, d);
  ep.support_labels.reserve(static_cast<std::size_t>(n * k));
  ep.query_labels.reserve(static_cast<std::size_t>(n * m));

  for (int j = 0; j < n; ++j) {
    const auto& cls = bank.classes[novel[static_cast<std::size_t>(chosen[static_cast<std::size_t>(j)])]];
    ep.class_ids.push_back(cls.id);
    const auto rows = sample_without_replacement(static_cast<int>(cls.features.rows()), k + m, rng);
    ep.support_rows.emplace_back(rows.begin(), rows.begin() + k);
    ep.query_rows.emplace_back(rows.begin() + k, rows.end());
    for (int s = 0; s < k; ++s) {
      ep.support.row(j * k + s) = cls.features.row(rows[static_cast<std::size_t>(s)]).cast<double>();
      ep.support_labels.push_back(j);
    }
    for (int s = 0; s < m; ++s) {
      ep.query.row(j * m + s) = cls.features.row(rows[static_cast<std::size_t>(k + s)]).cast<double>();
      ep.query_labels.push_back(j);
    }
  }
  return ep;
}

}  // namespace fshal
