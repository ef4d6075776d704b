#pragma once

#include <cstdint>
#include <utility>

#include "fshal/feature_store.hpp"

namespace fshal {

// Desk-scale stand-in for a real base/novel split. Each class gets a latent
// code z (its semantic vector). Its pre-activation mean mixes a shared linear
// image of z with a class-private random direction:
//   pre = rho * A z + (1 - rho) * u,   mean = softplus(pre + mean_shift)
// and samples are mean + N(0, spread^2 I), clamped at zero. A has orthogonal
// columns (d >= m), so semantic geometry carries over up to the softplus bend;
// a large mean_shift puts softplus in its near-linear range.
struct SyntheticSpec {
  int n_base = 64;
  int n_validation = 0;
  int n_novel = 20;
  int d = 64;
  int m = 16;
  int samples_per_class = 200;
  double rho = 0.9;
  double spread = 0.3;
  // Per-coordinate standard deviation of A z and u before softplus.
  double mean_scale = 0.35;
  double mean_shift = 0.0;
  std::uint64_t seed = 7;
};

void validate(const SyntheticSpec& spec);

// Class ids are "base_000", "val_000", "novel_000", ... in that order.
std::pair<FeatureBank, SemanticBank> generate(const SyntheticSpec& spec);

}  // namespace fshal
