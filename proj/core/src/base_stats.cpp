#include "fshal/base_stats.hpp"

#include <cmath>

#include "fshal/error.hpp"

namespace fshal {
namespace {

void check_tau(double tau) {
  if (!(tau >= 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorCode::invalid_argument, "tukey tau must be a finite non-negative number");
  }
}

template <typename Derived>
void transform_in_place(Eigen::MatrixBase<Derived>& x, double tau) {
  if ((x.array() < 0.0).any()) {
    throw Error(ErrorCode::invalid_argument, "tukey transform of a negative feature value");
  }
  if (tau == 0.0) {
    x = (x.array() + kTukeyLogEpsilon).log().matrix();
  } else if (tau == 0.5) {
    x = x.array().sqrt().matrix();
  } else if (tau != 1.0) {
    x = x.array().pow(tau).matrix();
  }
}

}  // namespace

Eigen::MatrixXd tukey_transform(const Eigen::Ref<const Eigen::MatrixXd>& rows, double tau) {
  check_tau(tau);
  Eigen::MatrixXd out = rows;
  transform_in_place(out, tau);
  return out;
}

Eigen::VectorXd compute_prototype(const Eigen::Ref<const Eigen::MatrixXd>& rows) {
  if (rows.rows() == 0) throw Error(ErrorCode::empty_input, "prototype of an empty sample set");
  return rows.colwise().mean().transpose();
}

Eigen::MatrixXd compute_covariance(const Eigen::Ref<const Eigen::MatrixXd>& rows,
                                   const Eigen::Ref<const Eigen::VectorXd>& mu) {
  if (rows.rows() < 2) {
    throw Error(ErrorCode::empty_input, "covariance needs at least 2 samples, got " + std::to_string(rows.rows()));
  }
  if (mu.size() != rows.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "prototype length does not match sample dimension");
  }
  const Eigen::MatrixXd centered = rows.rowwise() - mu.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(rows.rows() - 1);
  // The product is symmetric in exact arithmetic; force it bitwise.
  return (0.5 * (cov + cov.transpose())).eval();
}

std::optional<std::size_t> BaseClassStats::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return i;
  }
  return std::nullopt;
}

BaseClassStats compute_base_stats(const FeatureBank& bank, std::optional<double> tau) {
  const auto base = bank.split_indices(Split::base);
  if (base.empty()) throw Error(ErrorCode::empty_input, "feature bank has no base classes");

  BaseClassStats stats;
  stats.tau = tau;
  stats.prototypes.resize(static_cast<Eigen::Index>(base.size()), bank.dim);
  for (std::size_t i = 0; i < base.size(); ++i) {
    const auto& cls = bank.classes[base[i]];
    Eigen::MatrixXd rows = cls.features.cast<double>();
    if (tau) rows = tukey_transform(rows, *tau);
    const Eigen::VectorXd mu = compute_prototype(rows);
    stats.ids.push_back(cls.id);
    stats.prototypes.row(static_cast<Eigen::Index>(i)) = mu.transpose();
    stats.covariances.push_back(rows.rows() >= 2 ? compute_covariance(rows, mu)
                                                 : Eigen::MatrixXd::Zero(bank.dim, bank.dim));
    stats.counts.push_back(static_cast<int>(rows.rows()));
  }
  return stats;
}

std::shared_ptr<const BaseClassStats> BaseStatsCache::get(const FeatureBank& bank, std::optional<double> tau) {
  const Key key{&bank, tau};
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it != entries_.end()) return it->second;
  auto stats = std::make_shared<const BaseClassStats>(compute_base_stats(bank, tau));
  entries_.emplace(key, stats);
  return stats;
}

}  // namespace fshal
