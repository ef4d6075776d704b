#pragma once

// Prototype-view hallucination: estimate a novel class's prototype and
// covariance from the base classes its support samples relate to, then draw
// new features from the estimated Gaussian.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "fshal/base_stats.hpp"
#include "fshal/semantic_relations.hpp"

namespace fshal {

enum class MergingStrategy { after_estimation, before_estimation, no_merging };

std::string_view to_string(MergingStrategy m);
MergingStrategy parse_merging(std::string_view name);

struct PvdhParams {
  double alpha = 0.6;  // weight of the base prototypes against the sample
  double beta = 0.2;   // uniform variance added to every covariance entry
  int resample_count = 200;
  MergingStrategy merging = MergingStrategy::after_estimation;
  double jitter = 1e-6;
};

struct GaussianComponent {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

struct NovelClassEstimate {
  Eigen::VectorXd mu_hat;
  Eigen::MatrixXd sigma_hat;
  // Per-shot candidates, kept only for MergingStrategy::no_merging.
  std::vector<GaussianComponent> components;
};

// alpha * mean(mu_c over bases) + (1 - alpha) * f_tukey
Eigen::VectorXd candidate_prototype(const Eigen::Ref<const Eigen::VectorXd>& f_tukey,
                                    std::span<const std::size_t> bases, const BaseClassStats& stats, double alpha);

// mean(Sigma_c over bases) + beta * ones(d, d)
Eigen::MatrixXd candidate_covariance(std::span<const std::size_t> bases, const BaseClassStats& stats, double beta);

// `support_tukey` holds the K Tukey-space support rows of one novel class;
// `v_y` is that class's semantic vector. `stats` must be Tukey-space.
NovelClassEstimate estimate_class(const Eigen::Ref<const Eigen::MatrixXd>& support_tukey,
                                  const Eigen::Ref<const Eigen::VectorXd>& v_y, const SelectionParams& sel,
                                  const PvdhParams& params, const BaseClassStats& stats,
                                  const BaseSemantics& semantics);

// Symmetric square root factor L with L L^T = sigma + jitter I. Falls back to
// an eigendecomposition with negative eigenvalues clipped when Cholesky fails.
Eigen::MatrixXd gaussian_factor(const Eigen::Ref<const Eigen::MatrixXd>& sigma, double jitter);

// `count` draws from N(mu_hat, sigma_hat + jitter I), or from the equal-weight
// mixture of the estimate's components when it has any.
Eigen::MatrixXd resample(const NovelClassEstimate& est, int count, std::uint64_t seed, double jitter);

}  // namespace fshal
