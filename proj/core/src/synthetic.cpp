#include "fshal/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include <Eigen/QR>

#include "fshal/episodes.hpp"
#include "fshal/error.hpp"

namespace fshal {
namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

std::string class_name(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%03d", prefix, i);
  return buf;
}

}  // namespace

void validate(const SyntheticSpec& spec) {
  if (spec.n_base < 1 || spec.n_novel < 1 || spec.n_validation < 0 || spec.d < 1 || spec.m < 1 ||
      spec.samples_per_class < 1) {
    throw Error(ErrorCode::invalid_argument, "synthetic class counts and dimensions must be positive");
  }
  if (!(spec.rho >= 0.0 && spec.rho <= 1.0)) throw Error(ErrorCode::invalid_argument, "rho must lie in [0, 1]");
  if (!(spec.spread > 0.0) || !(spec.mean_scale > 0.0) || !std::isfinite(spec.mean_shift)) {
    throw Error(ErrorCode::invalid_argument, "spread and mean_scale must be positive");
  }
}

std::pair<FeatureBank, SemanticBank> generate(const SyntheticSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  std::normal_distribution<double> normal;

  const int d = spec.d;
  const int m = spec.m;
  // A is a scaled isometry when d >= m, so ||A z1 - A z2|| is proportional to ||z1 - z2||.
  Eigen::MatrixXd g(d, m);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < m; ++j) g(i, j) = normal(rng);
  }
  Eigen::MatrixXd a;
  if (d >= m) {
    a = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() * Eigen::MatrixXd::Identity(d, m);
    a *= spec.mean_scale * std::sqrt(static_cast<double>(d) / m);
  } else {
    a = g * (spec.mean_scale / std::sqrt(static_cast<double>(m)));
  }

  struct Plan {
    std::string id;
    Split split;
  };
  std::vector<Plan> plan;
  for (int i = 0; i < spec.n_base; ++i) plan.push_back({class_name("base", i), Split::base});
  for (int i = 0; i < spec.n_validation; ++i) plan.push_back({class_name("val", i), Split::validation});
  for (int i = 0; i < spec.n_novel; ++i) plan.push_back({class_name("novel", i), Split::novel});

  FeatureBank features;
  features.dim = static_cast<std::uint32_t>(d);
  SemanticBank semantics;
  semantics.dim = static_cast<std::uint32_t>(m);

  std::vector<Eigen::VectorXd> means;
  for (const auto& p : plan) {
    Eigen::VectorXd z(m);
    for (int j = 0; j < m; ++j) z(j) = normal(rng);
    Eigen::VectorXd u(d);
    for (int j = 0; j < d; ++j) u(j) = spec.mean_scale * normal(rng);
    const Eigen::VectorXd pre = spec.rho * (a * z) + (1.0 - spec.rho) * u;
    means.push_back(pre.unaryExpr([&](double x) { return softplus(x + spec.mean_shift); }));
    semantics.entries.emplace(p.id, z.cast<float>());
  }

  for (std::size_t c = 0; c < plan.size(); ++c) {
    ClassFeatures cls{plan[c].id, plan[c].split, FeatureMatrix(spec.samples_per_class, d)};
    for (int r = 0; r < spec.samples_per_class; ++r) {
      for (int j = 0; j < d; ++j) {
        const double v = means[c](j) + spec.spread * normal(rng);
        cls.features(r, j) = static_cast<float>(v > 0.0 ? v : 0.0);
      }
    }
    features.classes.push_back(std::move(cls));
  }
  return {std::move(features), std::move(semantics)};
}

}  // namespace fshal
