#pragma once

// Instance-view hallucination: a semantic fusion network that nudges each
// support feature towards its class prototype, plus the spatial attention
// emphasis applied to raw images.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fshal/base_stats.hpp"
#include "fshal/feature_store.hpp"

namespace fshal {

// One fully-connected layer over [f ; v] followed by a weighted residual:
//   out = ReLU(f + lambda * tanh(W [f ; v] + b))
struct FusionNetwork {
  Eigen::MatrixXd weights;  // d x (d + m)
  Eigen::VectorXd bias;     // d
  double lambda = 0.3;

  Eigen::Index feature_dim() const { return weights.rows(); }
  Eigen::Index semantic_dim() const { return weights.cols() - weights.rows(); }
};

struct FusionTrainConfig {
  int iterations = 100000;
  int batch_size = 5;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  // Every `holdout_stride`-th base sample is kept out of training and used to
  // score the network before and after.
  int holdout_stride = 10;
};

struct FusionExample {
  Eigen::VectorXd feature;
  Eigen::VectorXd semantic;
  Eigen::VectorXd target;  // raw-space prototype of the sample's class
};

struct FusionGradient {
  double loss = 0.0;
  Eigen::MatrixXd d_weights;
  Eigen::VectorXd d_bias;
};

struct TrainedFusion {
  FusionNetwork network;
  double initial_heldout_loss = 0.0;
  double final_heldout_loss = 0.0;
  int heldout_size = 0;
};

// Uniform(-1/sqrt(d+m), 1/sqrt(d+m)) weights, zero bias.
FusionNetwork init_fusion_network(Eigen::Index feature_dim, Eigen::Index semantic_dim, double lambda,
                                  std::uint64_t seed);

Eigen::VectorXd fuse_forward(const FusionNetwork& net, const Eigen::Ref<const Eigen::VectorXd>& f,
                             const Eigen::Ref<const Eigen::VectorXd>& v);

// Mean squared distance between fused outputs and targets.
double fusion_loss(const FusionNetwork& net, std::span<const FusionExample> batch);

// Loss and its analytic gradient w.r.t. weights and bias. ReLU'(0) is taken as 0.
FusionGradient fusion_loss_gradient(const FusionNetwork& net, std::span<const FusionExample> batch);

// Mini-batch SGD on the base split. Final parameters are rounded to binary32
// so the trained network and its serialized form are identical.
// Throws divergence if the loss goes non-finite or held-out loss ends above
// its starting value.
TrainedFusion train_fusion(const FeatureBank& bank, const SemanticBank& semantics, const BaseClassStats& raw_stats,
                           const FusionTrainConfig& cfg, double lambda);

struct HallucinatedRows {
  Eigen::MatrixXd rows;
  std::vector<int> labels;
};

// One fused feature per support row, labels preserved. `class_ids[label]`
// names the semantic vector used for that row.
HallucinatedRows hallucinate_support(const FusionNetwork& net, const Eigen::Ref<const Eigen::MatrixXd>& support,
                                     std::span<const int> labels, std::span<const std::string> class_ids,
                                     const SemanticBank& semantics);

// Height x width x channels, channel fastest.
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;

  double& at(int h, int w, int c) { return values[static_cast<std::size_t>((h * width + w) * channels + c)]; }
  double at(int h, int w, int c) const { return values[static_cast<std::size_t>((h * width + w) * channels + c)]; }
};

// x' = (map^t + 1) * x, broadcast over channels.
ImageTensor apply_attention(const ImageTensor& image, const Eigen::Ref<const Eigen::MatrixXd>& map, double t);

void write_fusion_network(const FusionNetwork& net, const std::filesystem::path& path);
FusionNetwork load_fusion_network(const std::filesystem::path& path);

}  // namespace fshal
