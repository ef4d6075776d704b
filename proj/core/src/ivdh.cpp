#include "fshal/ivdh.hpp"

#include <cmath>
#include <random>

#include "binary_io.hpp"
#include "fshal/episodes.hpp"
#include "fshal/error.hpp"

namespace fshal {
namespace {

constexpr std::array<char, 4> kFusionMagic{'F', 'S', 'F', 'N'};

void check_dims(const FusionNetwork& net, Eigen::Index f_size, Eigen::Index v_size) {
  if (net.bias.size() != net.feature_dim() || net.semantic_dim() < 0) {
    throw Error(ErrorCode::dimension_mismatch, "fusion network weights and bias disagree");
  }
  if (f_size != net.feature_dim() || v_size != net.semantic_dim()) {
    throw Error(ErrorCode::dimension_mismatch,
                "fusion input (" + std::to_string(f_size) + ", " + std::to_string(v_size) + ") vs network (" +
                    std::to_string(net.feature_dim()) + ", " + std::to_string(net.semantic_dim()) + ")");
  }
}

Eigen::VectorXd hidden(const FusionNetwork& net, const Eigen::Ref<const Eigen::VectorXd>& f,
                       const Eigen::Ref<const Eigen::VectorXd>& v) {
  const Eigen::Index d = net.feature_dim();
  return net.weights.leftCols(d) * f + net.weights.rightCols(net.semantic_dim()) * v + net.bias;
}

void round_to_f32(FusionNetwork& net) {
  net.weights = net.weights.cast<float>().cast<double>();
  net.bias = net.bias.cast<float>().cast<double>();
  net.lambda = static_cast<double>(static_cast<float>(net.lambda));
}

}  // namespace

FusionNetwork init_fusion_network(Eigen::Index feature_dim, Eigen::Index semantic_dim, double lambda,
                                  std::uint64_t seed) {
  if (feature_dim < 1 || semantic_dim < 0) throw Error(ErrorCode::invalid_argument, "fusion network dimensions");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorCode::invalid_argument, "lambda must lie in [0, 1]");
  FusionNetwork net;
  net.lambda = lambda;
  net.weights.resize(feature_dim, feature_dim + semantic_dim);
  net.bias = Eigen::VectorXd::Zero(feature_dim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(feature_dim + semantic_dim));
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < net.weights.rows(); ++i) {
    for (Eigen::Index j = 0; j < net.weights.cols(); ++j) net.weights(i, j) = u(rng);
  }
  return net;
}

Eigen::VectorXd fuse_forward(const FusionNetwork& net, const Eigen::Ref<const Eigen::VectorXd>& f,
                             const Eigen::Ref<const Eigen::VectorXd>& v) {
  check_dims(net, f.size(), v.size());
  const Eigen::VectorXd h = hidden(net, f, v);
  return (f.array() + net.lambda * h.array().tanh()).max(0.0).matrix();
}

double fusion_loss(const FusionNetwork& net, std::span<const FusionExample> batch) {
  if (batch.empty()) throw Error(ErrorCode::empty_input, "fusion loss of an empty batch");
  double total = 0.0;
  for (const auto& ex : batch) {
    if (ex.target.size() != net.feature_dim()) throw Error(ErrorCode::dimension_mismatch, "fusion target length");
    total += (fuse_forward(net, ex.feature, ex.semantic) - ex.target).squaredNorm();
  }
  return total / static_cast<double>(batch.size());
}

FusionGradient fusion_loss_gradient(const FusionNetwork& net, std::span<const FusionExample> batch) {
  if (batch.empty()) throw Error(ErrorCode::empty_input, "fusion loss of an empty batch");
  const Eigen::Index d = net.feature_dim();
  const Eigen::Index m = net.semantic_dim();
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  FusionGradient g;
  g.d_weights = Eigen::MatrixXd::Zero(d, d + m);
  g.d_bias = Eigen::VectorXd::Zero(d);
  for (const auto& ex : batch) {
    check_dims(net, ex.feature.size(), ex.semantic.size());
    if (ex.target.size() != d) throw Error(ErrorCode::dimension_mismatch, "fusion target length");
    const Eigen::ArrayXd t = hidden(net, ex.feature, ex.semantic).array().tanh();
    const Eigen::ArrayXd pre = ex.feature.array() + net.lambda * t;
    const Eigen::ArrayXd out = pre.max(0.0);
    const Eigen::ArrayXd diff = out - ex.target.array();
    g.loss += diff.square().sum() * inv_n;

    const Eigen::ArrayXd gate = (pre > 0.0).cast<double>();
    const Eigen::VectorXd delta = (2.0 * inv_n * diff * gate * net.lambda * (1.0 - t.square())).matrix();
    g.d_weights.leftCols(d).noalias() += delta * ex.feature.transpose();
    g.d_weights.rightCols(m).noalias() += delta * ex.semantic.transpose();
    g.d_bias += delta;
  }
  return g;
}

TrainedFusion train_fusion(const FeatureBank& bank, const SemanticBank& semantics, const BaseClassStats& raw_stats,
                           const FusionTrainConfig& cfg, double lambda) {
  if (cfg.iterations < 0 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0) || cfg.holdout_stride < 2) {
    throw Error(ErrorCode::invalid_argument, "fusion training config");
  }
  if (raw_stats.tau) throw Error(ErrorCode::invalid_argument, "fusion targets must be raw-space prototypes");
  if (raw_stats.dim() != static_cast<Eigen::Index>(bank.dim)) {
    throw Error(ErrorCode::dimension_mismatch, "base stats vs feature bank");
  }

  std::vector<FusionExample> train;
  std::vector<FusionExample> heldout;
  for (std::size_t c = 0; c < raw_stats.size(); ++c) {
    const auto* cls = bank.find(raw_stats.ids[c]);
    if (cls == nullptr) throw Error(ErrorCode::invalid_argument, "base class '" + raw_stats.ids[c] + "' not in bank");
    const auto* v = semantics.find(cls->id);
    if (v == nullptr) throw Error(ErrorCode::missing_semantic, "base class '" + cls->id + "'");
    const Eigen::VectorXd vd = v->cast<double>();
    const Eigen::VectorXd target = raw_stats.prototypes.row(static_cast<Eigen::Index>(c)).transpose();
    for (Eigen::Index r = 0; r < cls->features.rows(); ++r) {
      FusionExample ex{cls->features.row(r).cast<double>().transpose(), vd, target};
      const bool hold = cls->features.rows() > 1 && (r % cfg.holdout_stride) == cfg.holdout_stride - 1;
      (hold ? heldout : train).push_back(std::move(ex));
    }
  }
  if (train.empty()) throw Error(ErrorCode::empty_input, "no base samples to train the fusion network");
  if (heldout.empty()) heldout = train;

  TrainedFusion result;
  const Eigen::Index m = static_cast<Eigen::Index>(semantics.dim);
  result.network = init_fusion_network(bank.dim, m, lambda, mix64(cfg.seed ^ 0xF5F5F5F5ULL));
  auto& net = result.network;
  result.heldout_size = static_cast<int>(heldout.size());
  result.initial_heldout_loss = fusion_loss(net, heldout);

  Rng rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  std::vector<FusionExample> batch(static_cast<std::size_t>(cfg.batch_size));
  for (int it = 0; it < cfg.iterations; ++it) {
    for (auto& ex : batch) ex = train[pick(rng)];
    const auto g = fusion_loss_gradient(net, batch);
    if (!std::isfinite(g.loss) || !g.d_weights.allFinite()) {
      throw Error(ErrorCode::divergence, "non-finite fusion loss at iteration " + std::to_string(it) +
                                             "; try a lower learning rate");
    }
    net.weights -= cfg.learning_rate * g.d_weights;
    net.bias -= cfg.learning_rate * g.d_bias;
  }
  round_to_f32(net);

  result.final_heldout_loss = fusion_loss(net, heldout);
  if (!std::isfinite(result.final_heldout_loss) || result.final_heldout_loss > result.initial_heldout_loss) {
    throw Error(ErrorCode::divergence, "held-out fusion loss rose from " +
                                           std::to_string(result.initial_heldout_loss) + " to " +
                                           std::to_string(result.final_heldout_loss) +
                                           "; try a lower learning rate");
  }
  return result;
}

HallucinatedRows hallucinate_support(const FusionNetwork& net, const Eigen::Ref<const Eigen::MatrixXd>& support,
                                     std::span<const int> labels, std::span<const std::string> class_ids,
                                     const SemanticBank& semantics) {
  if (static_cast<std::size_t>(support.rows()) != labels.size()) {
    throw Error(ErrorCode::dimension_mismatch, "support rows vs labels");
  }
  std::vector<Eigen::VectorXd> vectors;
  for (const auto& id : class_ids) {
    const auto* v = semantics.find(id);
    if (v == nullptr) throw Error(ErrorCode::missing_semantic, "support class '" + id + "'");
    vectors.push_back(v->cast<double>());
  }
  HallucinatedRows out;
  out.rows.resize(support.rows(), support.cols());
  out.labels.assign(labels.begin(), labels.end());
  for (Eigen::Index r = 0; r < support.rows(); ++r) {
    const int label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || static_cast<std::size_t>(label) >= vectors.size()) {
      throw Error(ErrorCode::invalid_argument, "support label out of range");
    }
    out.rows.row(r) = fuse_forward(net, support.row(r).transpose(), vectors[static_cast<std::size_t>(label)]).transpose();
  }
  return out;
}

ImageTensor apply_attention(const ImageTensor& image, const Eigen::Ref<const Eigen::MatrixXd>& map, double t) {
  if (!(t > 0.0)) throw Error(ErrorCode::invalid_argument, "attention exponent t must be positive");
  if (map.rows() != image.height || map.cols() != image.width) {
    throw Error(ErrorCode::dimension_mismatch, "attention map " + std::to_string(map.rows()) + "x" +
                                                   std::to_string(map.cols()) + " vs image " +
                                                   std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  if (image.values.size() != static_cast<std::size_t>(image.height) * image.width * image.channels) {
    throw Error(ErrorCode::dimension_mismatch, "image buffer size");
  }
  if ((map.array() < 0.0).any() || (map.array() > 1.0).any() || !map.allFinite()) {
    throw Error(ErrorCode::invalid_argument, "attention map values must lie in [0, 1]");
  }
  ImageTensor out = image;
  for (int h = 0; h < image.height; ++h) {
    for (int w = 0; w < image.width; ++w) {
      const double scale = std::pow(map(h, w), t) + 1.0;
      for (int c = 0; c < image.channels; ++c) out.at(h, w, c) *= scale;
    }
  }
  return out;
}

void write_fusion_network(const FusionNetwork& net, const std::filesystem::path& path) {
  if (net.bias.size() != net.feature_dim() || net.semantic_dim() < 0) {
    throw Error(ErrorCode::dimension_mismatch, "fusion network weights and bias disagree");
  }
  if (!net.weights.allFinite() || !net.bias.allFinite()) {
    throw Error(ErrorCode::invalid_argument, "fusion network has non-finite parameters");
  }
  detail::ByteWriter w;
  w.magic(kFusionMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(net.feature_dim()));
  w.u32(static_cast<std::uint32_t>(net.semantic_dim()));
  w.f32(static_cast<float>(net.lambda));
  for (Eigen::Index i = 0; i < net.weights.rows(); ++i) {
    for (Eigen::Index j = 0; j < net.weights.cols(); ++j) w.f32(static_cast<float>(net.weights(i, j)));
  }
  for (Eigen::Index i = 0; i < net.bias.size(); ++i) w.f32(static_cast<float>(net.bias(i)));
  w.flush_to(path);
}

FusionNetwork load_fusion_network(const std::filesystem::path& path) {
  detail::ByteReader r(detail::slurp(path));
  r.expect_magic(kFusionMagic);
  const std::uint32_t version = r.u32("format version");
  if (version != kFormatVersion) {
    throw Error(ErrorCode::unsupported_version, "format version " + std::to_string(version));
  }
  const std::uint32_t d = r.u32("feature dimension");
  const std::uint32_t m = r.u32("semantic dimension");
  if (d == 0) throw Error(ErrorCode::invalid_argument, "fusion network with zero feature dimension");
  float lambda = 0.0f;
  r.floats(&lambda, 1, "lambda");
  const std::size_t n_weights = static_cast<std::size_t>(d) * (static_cast<std::size_t>(d) + m);
  r.require((n_weights + d) * 4, "fusion parameters");
  std::vector<float> raw(n_weights + d);
  r.floats(raw.data(), raw.size(), "fusion parameters");
  r.expect_end();

  FusionNetwork net;
  net.lambda = lambda;
  net.weights.resize(d, d + m);
  for (std::uint32_t i = 0; i < d; ++i) {
    for (std::uint32_t j = 0; j < d + m; ++j) net.weights(i, j) = raw[static_cast<std::size_t>(i) * (d + m) + j];
  }
  net.bias.resize(d);
  for (std::uint32_t i = 0; i < d; ++i) net.bias(i) = raw[n_weights + i];
  if (!(net.lambda >= 0.0 && net.lambda <= 1.0) || !net.weights.allFinite() || !net.bias.allFinite()) {
    throw Error(ErrorCode::invalid_argument, "fusion network parameters out of range");
  }
  return net;
}

}  // namespace fshal
