#include "fshal/pvdh.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <random>

#include "fshal/episodes.hpp"
#include "fshal/error.hpp"

namespace fshal {

std::string_view to_string(MergingStrategy m) {
  switch (m) {
    case MergingStrategy::after_estimation: return "after_estimation";
    case MergingStrategy::before_estimation: return "before_estimation";
    case MergingStrategy::no_merging: return "no_merging";
  }
  return "unknown";
}

MergingStrategy parse_merging(std::string_view name) {
  if (name == "after_estimation" || name == "after") return MergingStrategy::after_estimation;
  if (name == "before_estimation" || name == "before") return MergingStrategy::before_estimation;
  if (name == "no_merging" || name == "none") return MergingStrategy::no_merging;
  throw Error(ErrorCode::invalid_argument, "unknown merging strategy '" + std::string(name) + "'");
}

Eigen::VectorXd candidate_prototype(const Eigen::Ref<const Eigen::VectorXd>& f_tukey,
                                    std::span<const std::size_t> bases, const BaseClassStats& stats, double alpha) {
  if (bases.empty()) throw Error(ErrorCode::empty_input, "no correlated base classes");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::invalid_argument, "alpha must lie in [0, 1]");
  if (f_tukey.size() != stats.dim()) throw Error(ErrorCode::dimension_mismatch, "sample vs base prototypes");
  Eigen::VectorXd base_mean = Eigen::VectorXd::Zero(stats.dim());
  for (auto c : bases) base_mean += stats.prototypes.row(static_cast<Eigen::Index>(c)).transpose();
  base_mean /= static_cast<double>(bases.size());
  return alpha * base_mean + (1.0 - alpha) * f_tukey;
}

Eigen::MatrixXd candidate_covariance(std::span<const std::size_t> bases, const BaseClassStats& stats, double beta) {
  if (bases.empty()) throw Error(ErrorCode::empty_input, "no correlated base classes");
  if (!(beta >= 0.0)) throw Error(ErrorCode::invalid_argument, "beta must be non-negative");
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(stats.dim(), stats.dim());
  for (auto c : bases) sigma += stats.covariances[c];
  sigma /= static_cast<double>(bases.size());
  sigma.array() += beta;
  return sigma;
}

NovelClassEstimate estimate_class(const Eigen::Ref<const Eigen::MatrixXd>& support_tukey,
                                  const Eigen::Ref<const Eigen::VectorXd>& v_y, const SelectionParams& sel,
                                  const PvdhParams& params, const BaseClassStats& stats,
                                  const BaseSemantics& semantics) {
  const Eigen::Index k = support_tukey.rows();
  if (k < 1) throw Error(ErrorCode::empty_input, "estimate_class needs at least one support sample");
  if (!stats.tau) throw Error(ErrorCode::invalid_argument, "prototype estimation needs Tukey-space base stats");

  NovelClassEstimate est;
  if (params.merging == MergingStrategy::before_estimation) {
    const Eigen::VectorXd f_bar = support_tukey.colwise().sum().transpose() / static_cast<double>(k);
    const auto bases = select_correlated_bases(f_bar, v_y, sel, stats, semantics);
    est.mu_hat = candidate_prototype(f_bar, bases, stats, params.alpha);
    est.sigma_hat = candidate_covariance(bases, stats, params.beta);
    return est;
  }

  est.mu_hat = Eigen::VectorXd::Zero(stats.dim());
  est.sigma_hat = Eigen::MatrixXd::Zero(stats.dim(), stats.dim());
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::VectorXd f = support_tukey.row(i).transpose();
    const auto bases = select_correlated_bases(f, v_y, sel, stats, semantics);
    GaussianComponent cand{candidate_prototype(f, bases, stats, params.alpha),
                           candidate_covariance(bases, stats, params.beta)};
    est.mu_hat += cand.mu;
    est.sigma_hat += cand.sigma;
    if (params.merging == MergingStrategy::no_merging) est.components.push_back(std::move(cand));
  }
  est.mu_hat /= static_cast<double>(k);
  est.sigma_hat /= static_cast<double>(k);
  return est;
}

Eigen::MatrixXd gaussian_factor(const Eigen::Ref<const Eigen::MatrixXd>& sigma, double jitter) {
  if (sigma.rows() != sigma.cols()) throw Error(ErrorCode::dimension_mismatch, "covariance must be square");
  Eigen::MatrixXd a = 0.5 * (sigma + sigma.transpose());
  a.diagonal().array() += jitter;
  if (!a.allFinite()) throw Error(ErrorCode::factorization_failure, "covariance has non-finite entries");

  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() == Eigen::Success) return llt.matrixL();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorCode::factorization_failure, "eigendecomposition did not converge");
  }
  const Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd factor = eig.eigenvectors() * clipped.cwiseSqrt().asDiagonal();
  if (!factor.allFinite()) {
    throw Error(ErrorCode::factorization_failure,
                "minimum eigenvalue " + std::to_string(eig.eigenvalues().minCoeff()));
  }
  return factor;
}

Eigen::MatrixXd resample(const NovelClassEstimate& est, int count, std::uint64_t seed, double jitter) {
  if (count < 0) throw Error(ErrorCode::invalid_argument, "resample count must be non-negative");
  if (!(jitter >= 0.0)) throw Error(ErrorCode::invalid_argument, "jitter must be non-negative");
  const Eigen::Index d = est.mu_hat.size();
  Eigen::MatrixXd out(count, d);
  if (count == 0) return out;

  Rng rng(seed);
  std::normal_distribution<double> normal;
  auto standard_normals = [&](Eigen::Index n) {
    Eigen::MatrixXd z(n, d);
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index j = 0; j < d; ++j) z(r, j) = normal(rng);
    }
    return z;
  };

  if (est.components.size() <= 1) {
    // A single component is the same Gaussian as the merged estimate.
    const Eigen::MatrixXd factor = gaussian_factor(est.sigma_hat, jitter);
    out.noalias() = standard_normals(count) * factor.transpose();
    out.rowwise() += est.mu_hat.transpose();
    return out;
  }

  std::vector<Eigen::MatrixXd> factors;
  for (const auto& c : est.components) factors.push_back(gaussian_factor(c.sigma, jitter));
  std::uniform_int_distribution<std::size_t> pick(0, est.components.size() - 1);
  for (Eigen::Index r = 0; r < count; ++r) {
    const std::size_t c = pick(rng);
    Eigen::VectorXd z(d);
    for (Eigen::Index j = 0; j < d; ++j) z(j) = normal(rng);
    out.row(r) = (est.components[c].mu + factors[c] * z).transpose();
  }
  return out;
}

}  // namespace fshal
