#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace fshal {

enum class Provenance { support = 0, ivdh = 1, prototype = 2, resampled = 3 };

std::string_view to_string(Provenance p);

struct TrainSet {
  Eigen::MatrixXd rows;  // M x d
  std::vector<int> labels;
  std::vector<Provenance> provenance;
  int num_classes = 0;

  void append(const Eigen::Ref<const Eigen::MatrixXd>& block, std::span<const int> block_labels, Provenance p);
  void append(const Eigen::Ref<const Eigen::MatrixXd>& block, int label, Provenance p);
};

// Throws invalid_argument unless N >= 2, every label lies in [0, N) and
// every class appears at least once.
void validate(const TrainSet& ts);

struct ClassifierConfig {
  double l2 = 1e-3;
  int iterations = 1000;
  double learning_rate = 0.02;
  // Per-row loss weight indexed by Provenance.
  std::array<double, 4> provenance_weights{1.0, 1.0, 1.0, 1.0};
  // Record the objective every this many iterations (0 disables).
  int checkpoint_every = 0;
};

struct LinearClassifier {
  Eigen::MatrixXd weights;  // N x d
  Eigen::VectorXd bias;     // N
  double l2 = 0.0;
};

struct ClassifierGradient {
  double loss = 0.0;
  Eigen::MatrixXd d_weights;
  Eigen::VectorXd d_bias;
};

struct ClassifierTrace {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> checkpoints;
};

// Weighted mean cross-entropy plus (l2 / 2) * ||W||^2, and its gradient.
ClassifierGradient classifier_loss_gradient(const LinearClassifier& clf, const TrainSet& ts,
                                            const std::array<double, 4>& provenance_weights = {1.0, 1.0, 1.0, 1.0});

// Full-batch gradient descent from zero parameters.
LinearClassifier train_classifier(const TrainSet& ts, const ClassifierConfig& cfg, ClassifierTrace* trace = nullptr);

// Row-wise softmax of X W^T + b.
Eigen::MatrixXd predict_proba(const LinearClassifier& clf, const Eigen::Ref<const Eigen::MatrixXd>& rows);

template <typename Derived>
  requires(Derived::ColsAtCompileTime == 1)
Eigen::VectorXd predict_proba(const LinearClassifier& clf, const Eigen::MatrixBase<Derived>& f) {
  const Eigen::MatrixXd row = f.transpose().template cast<double>();
  return predict_proba(clf, Eigen::Ref<const Eigen::MatrixXd>(row)).row(0).transpose();
}

// Index of the largest entry; ties go to the lowest index.
int argmax(const Eigen::Ref<const Eigen::VectorXd>& scores);

// Fraction of rows whose argmax logit matches the label.
double evaluate_episode(const LinearClassifier& clf, const Eigen::Ref<const Eigen::MatrixXd>& query,
                        std::span<const int> labels);

}  // namespace fshal
