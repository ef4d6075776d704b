#include "fshal/classifier.hpp"

#include <cmath>

#include "fshal/error.hpp"

namespace fshal {
namespace {

void check_dims(const LinearClassifier& clf, Eigen::Index d) {
  if (clf.bias.size() != clf.weights.rows()) throw Error(ErrorCode::dimension_mismatch, "classifier weights vs bias");
  if (d != clf.weights.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "feature length " + std::to_string(d) + " vs classifier input " +
                                                   std::to_string(clf.weights.cols()));
  }
}

// Stable in-place softmax of each row; returns the row log-sum-exp.
Eigen::VectorXd softmax_rows(Eigen::MatrixXd& logits) {
  const Eigen::VectorXd mx = logits.rowwise().maxCoeff();
  logits.colwise() -= mx;
  logits = logits.array().exp().matrix();
  const Eigen::VectorXd s = logits.rowwise().sum();
  logits.array().colwise() /= s.array();
  return mx.array() + s.array().log();
}

Eigen::VectorXd row_weights(const TrainSet& ts, const std::array<double, 4>& w) {
  Eigen::VectorXd out(ts.rows.rows());
  for (Eigen::Index r = 0; r < out.size(); ++r) {
    const std::size_t p = ts.provenance.empty() ? 0 : static_cast<std::size_t>(ts.provenance[static_cast<std::size_t>(r)]);
    out(r) = w[p];
  }
  return out;
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::support: return "support";
    case Provenance::ivdh: return "ivdh";
    case Provenance::prototype: return "prototype";
    case Provenance::resampled: return "resampled";
  }
  return "unknown";
}

void TrainSet::append(const Eigen::Ref<const Eigen::MatrixXd>& block, std::span<const int> block_labels,
                      Provenance p) {
  if (static_cast<std::size_t>(block.rows()) != block_labels.size()) {
    throw Error(ErrorCode::dimension_mismatch, "train block rows vs labels");
  }
  if (block.rows() == 0) return;
  if (rows.size() > 0 && block.cols() != rows.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "train block feature length");
  }
  const Eigen::Index old = rows.rows();
  Eigen::MatrixXd grown(old + block.rows(), block.cols());
  if (old > 0) grown.topRows(old) = rows;
  grown.bottomRows(block.rows()) = block;
  rows.swap(grown);
  labels.insert(labels.end(), block_labels.begin(), block_labels.end());
  provenance.insert(provenance.end(), block_labels.size(), p);
}

void TrainSet::append(const Eigen::Ref<const Eigen::MatrixXd>& block, int label, Provenance p) {
  std::vector<int> l(static_cast<std::size_t>(block.rows()), label);
  append(block, l, p);
}

void validate(const TrainSet& ts) {
  if (ts.num_classes < 2) throw Error(ErrorCode::invalid_argument, "classifier needs at least 2 classes");
  if (static_cast<std::size_t>(ts.rows.rows()) != ts.labels.size()) {
    throw Error(ErrorCode::dimension_mismatch, "train rows vs labels");
  }
  if (!ts.provenance.empty() && ts.provenance.size() != ts.labels.size()) {
    throw Error(ErrorCode::dimension_mismatch, "train rows vs provenance");
  }
  std::vector<bool> seen(static_cast<std::size_t>(ts.num_classes), false);
  for (int l : ts.labels) {
    if (l < 0 || l >= ts.num_classes) throw Error(ErrorCode::invalid_argument, "label out of range");
    seen[static_cast<std::size_t>(l)] = true;
  }
  for (int c = 0; c < ts.num_classes; ++c) {
    if (!seen[static_cast<std::size_t>(c)]) {
      throw Error(ErrorCode::invalid_argument, "class " + std::to_string(c) + " has no training rows");
    }
  }
  if (!ts.rows.allFinite()) throw Error(ErrorCode::invalid_argument, "train rows contain non-finite values");
}

ClassifierGradient classifier_loss_gradient(const LinearClassifier& clf, const TrainSet& ts,
                                            const std::array<double, 4>& provenance_weights) {
  check_dims(clf, ts.rows.cols());
  const Eigen::VectorXd w = row_weights(ts, provenance_weights);
  const double total = w.sum();
  if (!(total > 0.0)) throw Error(ErrorCode::invalid_argument, "row weights sum to zero");

  Eigen::MatrixXd probs = ts.rows * clf.weights.transpose();
  probs.rowwise() += clf.bias.transpose();
  const Eigen::MatrixXd logits = probs;
  const Eigen::VectorXd lse = softmax_rows(probs);

  ClassifierGradient g;
  double ce = 0.0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const int y = ts.labels[static_cast<std::size_t>(r)];
    ce += w(r) * (lse(r) - logits(r, y));
    probs(r, y) -= 1.0;
  }
  probs.array().colwise() *= (w / total).array();
  g.loss = ce / total + 0.5 * clf.l2 * clf.weights.squaredNorm();
  g.d_weights.noalias() = probs.transpose() * ts.rows;
  g.d_weights += clf.l2 * clf.weights;
  g.d_bias = probs.colwise().sum().transpose();
  return g;
}

LinearClassifier train_classifier(const TrainSet& ts, const ClassifierConfig& cfg, ClassifierTrace* trace) {
  validate(ts);
  if (cfg.iterations < 0 || !(cfg.learning_rate > 0.0) || !(cfg.l2 >= 0.0)) {
    throw Error(ErrorCode::invalid_argument, "classifier config");
  }
  const Eigen::Index n = ts.num_classes;
  const Eigen::Index d = ts.rows.cols();
  const Eigen::Index m = ts.rows.rows();

  LinearClassifier clf;
  clf.weights = Eigen::MatrixXd::Zero(n, d);
  clf.bias = Eigen::VectorXd::Zero(n);
  clf.l2 = cfg.l2;

  // Dense one-hot targets scaled by normalized row weights; reused every step.
  const Eigen::VectorXd w = row_weights(ts, cfg.provenance_weights);
  const double total = w.sum();
  if (!(total > 0.0)) throw Error(ErrorCode::invalid_argument, "row weights sum to zero");
  const Eigen::VectorXd wn = w / total;
  Eigen::MatrixXd target = Eigen::MatrixXd::Zero(m, n);
  for (Eigen::Index r = 0; r < m; ++r) target(r, ts.labels[static_cast<std::size_t>(r)]) = wn(r);

  Eigen::MatrixXd logits(m, n);
  auto objective = [&]() {
    double ce = 0.0;
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto row = logits.row(r);
      const double mx = row.maxCoeff();
      const double lse = mx + std::log((row.array() - mx).exp().sum());
      ce += wn(r) * (lse - row(ts.labels[static_cast<std::size_t>(r)]));
    }
    return ce + 0.5 * clf.l2 * clf.weights.squaredNorm();
  };
  auto forward = [&]() {
    logits.noalias() = ts.rows * clf.weights.transpose();
    logits.rowwise() += clf.bias.transpose();
  };

  forward();
  const double initial = objective();
  if (trace) {
    trace->initial_loss = initial;
    trace->checkpoints.assign(1, initial);
  }

  Eigen::MatrixXd grad_w(n, d);
  for (int it = 0; it < cfg.iterations; ++it) {
    softmax_rows(logits);
    logits.array().colwise() *= wn.array();
    logits -= target;  // now holds w_r (p_r - y_r)
    grad_w.noalias() = logits.transpose() * ts.rows;
    grad_w += cfg.l2 * clf.weights;
    clf.bias -= cfg.learning_rate * logits.colwise().sum().transpose();
    clf.weights -= cfg.learning_rate * grad_w;
    forward();
    if (trace && cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) {
      trace->checkpoints.push_back(objective());
    }
  }

  const double final_loss = objective();
  if (!std::isfinite(final_loss) || !clf.weights.allFinite() || final_loss > initial) {
    throw Error(ErrorCode::divergence, "classifier objective went from " + std::to_string(initial) + " to " +
                                           std::to_string(final_loss) + "; try a lower learning rate");
  }
  if (trace) trace->final_loss = final_loss;
  return clf;
}

Eigen::MatrixXd predict_proba(const LinearClassifier& clf, const Eigen::Ref<const Eigen::MatrixXd>& rows) {
  check_dims(clf, rows.cols());
  Eigen::MatrixXd logits = rows * clf.weights.transpose();
  logits.rowwise() += clf.bias.transpose();
  softmax_rows(logits);
  return logits;
}

int argmax(const Eigen::Ref<const Eigen::VectorXd>& scores) {
  if (scores.size() == 0) throw Error(ErrorCode::empty_input, "argmax of an empty vector");
  int best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i) {
    if (scores(i) > scores(best)) best = static_cast<int>(i);
  }
  return best;
}

double evaluate_episode(const LinearClassifier& clf, const Eigen::Ref<const Eigen::MatrixXd>& query,
                        std::span<const int> labels) {
  if (query.rows() == 0) throw Error(ErrorCode::empty_input, "empty query set");
  if (static_cast<std::size_t>(query.rows()) != labels.size()) {
    throw Error(ErrorCode::dimension_mismatch, "query rows vs labels");
  }
  check_dims(clf, query.cols());
  Eigen::MatrixXd logits = query * clf.weights.transpose();
  logits.rowwise() += clf.bias.transpose();
  int correct = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    if (argmax(logits.row(r).transpose()) == labels[static_cast<std::size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(query.rows());
}

}  // namespace fshal
