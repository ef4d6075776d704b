#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "fshal/base_stats.hpp"
#include "fshal/feature_store.hpp"

namespace fshal {

struct SelectionParams {
  int p = 10;  // semantic shortlist size
  int q = 2;   // visual picks within the shortlist
  int k = 1;   // semantic top-k for the instance view
};

// Throws invalid_argument unless 1 <= q <= p <= n_base and 1 <= k <= n_base.
void check_selection_params(const SelectionParams& params, std::size_t n_base);

// Squared Euclidean distance between class semantic vectors.
double semantic_distance(const Eigen::Ref<const Eigen::VectorXd>& v_y, const Eigen::Ref<const Eigen::VectorXd>& v_c);

// Squared Euclidean distance between a Tukey-space sample and a Tukey-space prototype.
double visual_distance(const Eigen::Ref<const Eigen::VectorXd>& f_prime, const Eigen::Ref<const Eigen::VectorXd>& mu_c);

// Indices of the `count` smallest entries of `distances` restricted to
// `candidates`, ascending by (distance, id). The tie-break on id keeps the
// result independent of candidate order.
std::vector<std::size_t> rank_smallest(std::span<const double> distances, std::span<const std::size_t> candidates,
                                       std::span<const std::string> ids, std::size_t count);

// Semantic vectors of the base classes, row-aligned with BaseClassStats.
struct BaseSemantics {
  std::vector<std::string> ids;
  Eigen::MatrixXd vectors;  // n_base x m

  std::size_t size() const { return ids.size(); }
};

// Throws missing_semantic if a base class has no entry.
BaseSemantics gather_base_semantics(const BaseClassStats& stats, const SemanticBank& semantics);

// Base-class indices of the k semantically nearest bases to v_y.
std::vector<std::size_t> top_k_semantic(const Eigen::Ref<const Eigen::VectorXd>& v_y, const BaseSemantics& bases,
                                        int k);

// Same, addressed by class id; returns base class ids.
std::vector<std::string> top_k_semantic(std::string_view y, const SemanticBank& semantics,
                                        std::span<const std::string> base_ids, int k);

// Two-stage ranking: shortlist the p semantically nearest bases to the
// sample's class, then keep the q visually nearest to the Tukey-space sample.
// Returns base indices ascending by visual distance.
std::vector<std::size_t> select_correlated_bases(const Eigen::Ref<const Eigen::VectorXd>& x_feature_tukey,
                                                 const Eigen::Ref<const Eigen::VectorXd>& v_y,
                                                 const SelectionParams& params, const BaseClassStats& stats,
                                                 const BaseSemantics& semantics);

}  // namespace fshal
