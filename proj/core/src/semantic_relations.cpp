#include "fshal/semantic_relations.hpp"

#include <algorithm>
#include <numeric>

#include "fshal/error.hpp"

namespace fshal {

void check_selection_params(const SelectionParams& params, std::size_t n_base) {
  const auto n = static_cast<int>(n_base);
  if (params.q < 1 || params.p < params.q || params.p > n) {
    throw Error(ErrorCode::invalid_argument, "selection needs 1 <= q <= p <= n_base (q=" + std::to_string(params.q) +
                                                 ", p=" + std::to_string(params.p) +
                                                 ", n_base=" + std::to_string(n) + ")");
  }
  if (params.k < 1 || params.k > n) {
    throw Error(ErrorCode::invalid_argument,
                "semantic top-k out of range (k=" + std::to_string(params.k) + ", n_base=" + std::to_string(n) + ")");
  }
}

double semantic_distance(const Eigen::Ref<const Eigen::VectorXd>& v_y, const Eigen::Ref<const Eigen::VectorXd>& v_c) {
  if (v_y.size() != v_c.size()) throw Error(ErrorCode::dimension_mismatch, "semantic vectors differ in length");
  return (v_y - v_c).squaredNorm();
}

double visual_distance(const Eigen::Ref<const Eigen::VectorXd>& f_prime,
                       const Eigen::Ref<const Eigen::VectorXd>& mu_c) {
  if (f_prime.size() != mu_c.size()) throw Error(ErrorCode::dimension_mismatch, "feature and prototype differ in length");
  return (f_prime - mu_c).squaredNorm();
}

std::vector<std::size_t> rank_smallest(std::span<const double> distances, std::span<const std::size_t> candidates,
                                       std::span<const std::string> ids, std::size_t count) {
  if (count > candidates.size()) {
    throw Error(ErrorCode::invalid_argument, "asked for " + std::to_string(count) + " of " +
                                                 std::to_string(candidates.size()) + " candidates");
  }
  std::vector<std::size_t> order(candidates.begin(), candidates.end());
  auto before = [&](std::size_t a, std::size_t b) {
    if (distances[a] != distances[b]) return distances[a] < distances[b];
    return ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(), before);
  order.resize(count);
  return order;
}

BaseSemantics gather_base_semantics(const BaseClassStats& stats, const SemanticBank& semantics) {
  BaseSemantics out;
  out.ids = stats.ids;
  out.vectors.resize(static_cast<Eigen::Index>(stats.size()), semantics.dim);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto* v = semantics.find(stats.ids[i]);
    if (v == nullptr) throw Error(ErrorCode::missing_semantic, "base class '" + stats.ids[i] + "'");
    if (v->size() != static_cast<Eigen::Index>(semantics.dim)) {
      throw Error(ErrorCode::dimension_mismatch, "semantic vector of '" + stats.ids[i] + "'");
    }
    out.vectors.row(static_cast<Eigen::Index>(i)) = v->cast<double>().transpose();
  }
  return out;
}

std::vector<std::size_t> top_k_semantic(const Eigen::Ref<const Eigen::VectorXd>& v_y, const BaseSemantics& bases,
                                        int k) {
  if (k < 1 || static_cast<std::size_t>(k) > bases.size()) {
    throw Error(ErrorCode::invalid_argument, "semantic top-k out of range (k=" + std::to_string(k) + ")");
  }
  if (v_y.size() != bases.vectors.cols()) throw Error(ErrorCode::dimension_mismatch, "semantic vectors differ in length");
  std::vector<double> dist(bases.size());
  for (std::size_t c = 0; c < bases.size(); ++c) {
    dist[c] = (bases.vectors.row(static_cast<Eigen::Index>(c)).transpose() - v_y).squaredNorm();
  }
  std::vector<std::size_t> all(bases.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return rank_smallest(dist, all, bases.ids, static_cast<std::size_t>(k));
}

std::vector<std::string> top_k_semantic(std::string_view y, const SemanticBank& semantics,
                                        std::span<const std::string> base_ids, int k) {
  const auto* v_y = semantics.find(y);
  if (v_y == nullptr) throw Error(ErrorCode::missing_semantic, "class '" + std::string(y) + "'");
  BaseSemantics bases;
  bases.ids.assign(base_ids.begin(), base_ids.end());
  bases.vectors.resize(static_cast<Eigen::Index>(base_ids.size()), v_y->size());
  for (std::size_t i = 0; i < base_ids.size(); ++i) {
    const auto* v = semantics.find(base_ids[i]);
    if (v == nullptr) throw Error(ErrorCode::missing_semantic, "base class '" + base_ids[i] + "'");
    if (v->size() != v_y->size()) throw Error(ErrorCode::dimension_mismatch, "semantic vector of '" + base_ids[i] + "'");
    bases.vectors.row(static_cast<Eigen::Index>(i)) = v->cast<double>().transpose();
  }
  std::vector<std::string> out;
  for (auto i : top_k_semantic(v_y->cast<double>(), bases, k)) out.push_back(bases.ids[i]);
  return out;
}

std::vector<std::size_t> select_correlated_bases(const Eigen::Ref<const Eigen::VectorXd>& x_feature_tukey,
                                                 const Eigen::Ref<const Eigen::VectorXd>& v_y,
                                                 const SelectionParams& params, const BaseClassStats& stats,
                                                 const BaseSemantics& semantics) {
  const std::size_t n = stats.size();
  if (semantics.size() != n) throw Error(ErrorCode::dimension_mismatch, "base semantics not aligned with base stats");
  if (params.q < 1 || params.p < params.q || static_cast<std::size_t>(params.p) > n) {
    throw Error(ErrorCode::invalid_argument, "selection needs 1 <= q <= p <= n_base");
  }
  if (x_feature_tukey.size() != stats.dim()) throw Error(ErrorCode::dimension_mismatch, "sample vs base prototypes");
  if (v_y.size() != semantics.vectors.cols()) throw Error(ErrorCode::dimension_mismatch, "semantic vector length");

  std::vector<double> sem(n);
  std::vector<double> vis(n);
  for (std::size_t c = 0; c < n; ++c) {
    const auto row = static_cast<Eigen::Index>(c);
    sem[c] = (semantics.vectors.row(row).transpose() - v_y).squaredNorm();
  }
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto shortlist = rank_smallest(sem, all, stats.ids, static_cast<std::size_t>(params.p));
  for (auto c : shortlist) {
    vis[c] = (stats.prototypes.row(static_cast<Eigen::Index>(c)).transpose() - x_feature_tukey).squaredNorm();
  }
  return rank_smallest(vis, shortlist, stats.ids, static_cast<std::size_t>(params.q));
}

}  // namespace fshal
