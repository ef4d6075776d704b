#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fshal/feature_store.hpp"

namespace fshal {

// Floor added before the log branch (tau == 0); ReLU features contain exact zeros.
inline constexpr double kTukeyLogEpsilon = 1e-6;

// Elementwise f^tau for tau > 0, log(f + eps) for tau == 0. Rejects negative entries.
Eigen::MatrixXd tukey_transform(const Eigen::Ref<const Eigen::MatrixXd>& rows, double tau);

template <typename Derived>
  requires(Derived::ColsAtCompileTime == 1)
Eigen::VectorXd tukey_transform(const Eigen::MatrixBase<Derived>& f, double tau) {
  const Eigen::MatrixXd col = f.template cast<double>();
  return tukey_transform(Eigen::Ref<const Eigen::MatrixXd>(col), tau).col(0);
}

// Row mean of an n x d sample matrix.
Eigen::VectorXd compute_prototype(const Eigen::Ref<const Eigen::MatrixXd>& rows);

// Unbiased sample covariance (divisor n - 1) around `mu`. Needs n >= 2.
Eigen::MatrixXd compute_covariance(const Eigen::Ref<const Eigen::MatrixXd>& rows,
                                   const Eigen::Ref<const Eigen::VectorXd>& mu);

// Prototype and covariance of every base class, either in raw feature space
// (tau unset) or after the Tukey transform with the given tau.
struct BaseClassStats {
  std::optional<double> tau;
  std::vector<std::string> ids;
  Eigen::MatrixXd prototypes;  // n_base x d, row c is mu_c
  std::vector<Eigen::MatrixXd> covariances;
  std::vector<int> counts;

  std::size_t size() const { return ids.size(); }
  Eigen::Index dim() const { return prototypes.cols(); }
  std::optional<std::size_t> index_of(std::string_view id) const;
};

BaseClassStats compute_base_stats(const FeatureBank& bank, std::optional<double> tau);

// Write-once cache keyed by bank identity and transform space. Entries are
// immutable once inserted and may be shared across threads.
class BaseStatsCache {
 public:
  std::shared_ptr<const BaseClassStats> get(const FeatureBank& bank, std::optional<double> tau);

 private:
  using Key = std::pair<const FeatureBank*, std::optional<double>>;
  std::mutex mutex_;
  std::map<Key, std::shared_ptr<const BaseClassStats>> entries_;
};

}  // namespace fshal
