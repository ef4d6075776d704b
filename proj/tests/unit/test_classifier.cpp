#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fshal/classifier.hpp"
#include "fshal/error.hpp"
#include "oracles.hpp"

using namespace fshal;

namespace {

LinearClassifier random_clf(int n, int d, std::mt19937_64& rng, double l2 = 0.0) {
  std::normal_distribution<double> g;
  LinearClassifier c;
  c.weights.resize(n, d);
  c.bias.resize(n);
  for (Eigen::Index i = 0; i < c.weights.size(); ++i) c.weights.data()[i] = g(rng);
  for (Eigen::Index i = 0; i < n; ++i) c.bias(i) = g(rng);
  c.l2 = l2;
  return c;
}

TrainSet random_set(int n, int d, int per_class, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  TrainSet ts;
  ts.num_classes = n;
  for (int c = 0; c < n; ++c) {
    Eigen::MatrixXd block(per_class, d);
    for (Eigen::Index i = 0; i < block.size(); ++i) block.data()[i] = g(rng) + c;
    ts.append(block, c, static_cast<Provenance>(c % 4));
  }
  return ts;
}

LinearClassifier uniform_clf(int n, int d) {
  return {Eigen::MatrixXd::Zero(n, d), Eigen::VectorXd::Zero(n), 0.0};
}

}  // namespace

TEST(PredictProba, UniformWhenParametersAreZero) {
  const auto p = predict_proba(uniform_clf(5, 3), Eigen::Vector3d(1, -2, 7));
  for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(p(i), 0.2);
}

TEST(PredictProba, BiasOnlyAnalytic) {
  LinearClassifier c = uniform_clf(2, 1);
  c.bias << std::log(2.0), 0.0;
  const auto p = predict_proba(c, Eigen::VectorXd::Constant(1, 4.0));
  EXPECT_NEAR(p(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p(1), 1.0 / 3.0, 1e-15);
}

TEST(PredictProba, MatchesOracleAndSumsToOne) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int t = 0; t < 50; ++t) {
    const int n = 2 + t % 4, d = 1 + t % 8;
    const auto c = random_clf(n, d, rng);
    Eigen::MatrixXd x(7, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 5.0 * g(rng);
    const Eigen::MatrixXd p = predict_proba(c, x);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      oracle::Vec logits(static_cast<std::size_t>(n));
      for (int k = 0; k < n; ++k) logits[static_cast<std::size_t>(k)] = c.weights.row(k).dot(x.row(r)) + c.bias(k);
      const auto want = oracle::softmax(logits);
      for (int k = 0; k < n; ++k) EXPECT_NEAR(p(r, k), want[static_cast<std::size_t>(k)], 1e-12);
      EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-9);
      EXPECT_TRUE(Eigen::VectorXd(p.row(r).transpose()).isApprox(predict_proba(c, Eigen::VectorXd(x.row(r).transpose())), 1e-12));
    }
  }
}

TEST(PredictProba, StableForHugeLogitsAndShiftInvariant) {
  LinearClassifier c = uniform_clf(3, 1);
  c.bias << 1000.0, 999.0, -1000.0;
  const auto p = predict_proba(c, Eigen::VectorXd::Zero(1));
  EXPECT_TRUE(p.allFinite());
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
  LinearClassifier shifted = c;
  shifted.bias.array() += 12345.0;
  EXPECT_EQ(argmax(predict_proba(shifted, Eigen::VectorXd::Zero(1))), argmax(p));
  EXPECT_TRUE(predict_proba(shifted, Eigen::VectorXd::Zero(1)).isApprox(p, 1e-9));
}

TEST(PredictProba, DimensionMismatch) {
  EXPECT_THROW(predict_proba(uniform_clf(2, 3), Eigen::Vector2d(0, 0)), Error);
}

TEST(Argmax, LowestIndexWinsTies) {
  EXPECT_EQ(argmax(Eigen::Vector3d(1, 3, 3)), 1);
  EXPECT_EQ(argmax(Eigen::Vector3d(0.2, 0.2, 0.2)), 0);
}

TEST(Gradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 50; ++t) {
    const int n = 2 + t % 3, d = 1 + t % 8;
    TrainSet ts = random_set(n, d, 3, rng);
    LinearClassifier c = random_clf(n, d, rng, 0.1 * (t % 3));
    const std::array<double, 4> pw{1.0, 0.5, 2.0, 0.25};
    const auto g = classifier_loss_gradient(c, ts, pw);
    auto loss = [&] { return classifier_loss_gradient(c, ts, pw).loss; };
    const double scale = std::max(g.d_weights.cwiseAbs().maxCoeff(), g.d_bias.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < c.weights.size(); ++i) {
      const double num = oracle::central_difference(c.weights.data()[i], loss);
      EXPECT_LE(oracle::relative_error(g.d_weights.data()[i], num, 1e-3 * scale), 1e-5) << "trial " << t;
    }
    for (Eigen::Index i = 0; i < c.bias.size(); ++i) {
      const double num = oracle::central_difference(c.bias(i), loss);
      EXPECT_LE(oracle::relative_error(g.d_bias(i), num, 1e-3 * scale), 1e-5) << "trial " << t;
    }
  }
}

TEST(Train, SeparableClassesReachFullTrainingAccuracy) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 0.3);
  TrainSet ts;
  ts.num_classes = 2;
  Eigen::MatrixXd a(10, 2), b(10, 2);
  for (int r = 0; r < 10; ++r) {
    a.row(r) << -2 + g(rng), g(rng);
    b.row(r) << 2 + g(rng), g(rng);
  }
  ts.append(a, 0, Provenance::support);
  ts.append(b, 1, Provenance::support);
  ClassifierConfig cfg;
  cfg.iterations = 500;
  const auto clf = train_classifier(ts, cfg);
  EXPECT_EQ(evaluate_episode(clf, ts.rows, ts.labels), 1.0);
}

TEST(Train, IdenticalFeaturesStayAtHalf) {
  TrainSet ts;
  ts.num_classes = 2;
  ts.append(Eigen::MatrixXd::Constant(4, 3, 1.5), 0, Provenance::support);
  ts.append(Eigen::MatrixXd::Constant(4, 3, 1.5), 1, Provenance::support);
  const auto clf = train_classifier(ts, {});
  const auto p = predict_proba(clf, Eigen::Vector3d(-3, 0, 9));
  EXPECT_NEAR(p(0), 0.5, 1e-12);
  EXPECT_NEAR(p(1), 0.5, 1e-12);
}

TEST(Train, CheckpointsNeverIncrease) {
  std::mt19937_64 rng(8);
  const TrainSet ts = random_set(4, 6, 12, rng);
  ClassifierConfig cfg;
  cfg.iterations = 400;
  cfg.checkpoint_every = 20;
  ClassifierTrace trace;
  const auto clf = train_classifier(ts, cfg, &trace);
  ASSERT_EQ(trace.checkpoints.size(), 21u);
  EXPECT_LT(trace.final_loss, trace.initial_loss);
  EXPECT_NEAR(trace.initial_loss, std::log(4.0), 1e-12);
  for (std::size_t i = 1; i < trace.checkpoints.size(); ++i) EXPECT_LE(trace.checkpoints[i], trace.checkpoints[i - 1]);
  EXPECT_NEAR(classifier_loss_gradient(clf, ts).loss, trace.final_loss, 1e-9);
}

TEST(Train, Deterministic) {
  std::mt19937_64 rng(21);
  const TrainSet ts = random_set(5, 8, 6, rng);
  const auto a = train_classifier(ts, {});
  const auto b = train_classifier(ts, {});
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
}

TEST(Train, RejectsBadSetsAndConfig) {
  TrainSet one;
  one.num_classes = 1;
  one.append(Eigen::MatrixXd::Ones(3, 2), 0, Provenance::support);
  EXPECT_THROW(train_classifier(one, {}), Error);

  TrainSet gap;
  gap.num_classes = 3;
  gap.append(Eigen::MatrixXd::Ones(2, 2), 0, Provenance::support);
  gap.append(Eigen::MatrixXd::Ones(2, 2), 2, Provenance::support);
  EXPECT_THROW(train_classifier(gap, {}), Error);

  TrainSet ok;
  ok.num_classes = 2;
  ok.append(Eigen::MatrixXd::Ones(2, 2), 0, Provenance::support);
  ok.append(Eigen::MatrixXd::Zero(2, 2), 1, Provenance::support);
  ClassifierConfig bad;
  bad.learning_rate = 0.0;
  EXPECT_THROW(train_classifier(ok, bad), Error);

  TrainSet nan = ok;
  nan.rows(0, 0) = std::nan("");
  EXPECT_THROW(train_classifier(nan, {}), Error);
}

TEST(Train, HugeLearningRateDiverges) {
  TrainSet ts;
  ts.num_classes = 2;
  ts.append(Eigen::MatrixXd::Constant(2, 2, 1e150), 0, Provenance::support);
  ts.append(Eigen::MatrixXd::Constant(2, 2, -1e150), 1, Provenance::support);
  ClassifierConfig cfg;
  cfg.learning_rate = 1e200;
  try {
    train_classifier(ts, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::divergence);
  }
}

TEST(TrainSetAppend, TracksLabelsAndProvenance) {
  TrainSet ts;
  ts.num_classes = 2;
  ts.append(Eigen::MatrixXd::Ones(2, 3), 1, Provenance::resampled);
  const std::vector<int> labels = {0, 1, 0};
  ts.append(Eigen::MatrixXd::Zero(3, 3), labels, Provenance::ivdh);
  EXPECT_EQ(ts.rows.rows(), 5);
  EXPECT_EQ(ts.labels, (std::vector<int>{1, 1, 0, 1, 0}));
  EXPECT_EQ(ts.provenance[0], Provenance::resampled);
  EXPECT_EQ(ts.provenance[4], Provenance::ivdh);
  EXPECT_THROW(ts.append(Eigen::MatrixXd::Zero(1, 2), 0, Provenance::support), Error);
  EXPECT_THROW(ts.append(Eigen::MatrixXd::Zero(2, 3), std::vector<int>{0}, Provenance::support), Error);
}

TEST(Evaluate, PerfectAndHopelessClassifiers) {
  LinearClassifier c = uniform_clf(2, 1);
  c.weights << 1, -1;
  Eigen::MatrixXd q(4, 1);
  q << 1, 2, -1, -3;
  EXPECT_EQ(evaluate_episode(c, q, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_EQ(evaluate_episode(c, q, std::vector<int>{1, 1, 0, 0}), 0.0);
  EXPECT_THROW(evaluate_episode(c, Eigen::MatrixXd(0, 1), std::vector<int>{}), Error);
}

TEST(Evaluate, NoneCorrectOfSeventyFive) {
  LinearClassifier c = uniform_clf(5, 2);
  c.bias(4) = 1.0;
  const std::vector<int> labels(75, 0);
  EXPECT_EQ(evaluate_episode(c, Eigen::MatrixXd::Ones(75, 2), labels), 0.0);
}

TEST(Evaluate, UniformClassifierNearChanceOnRandomLabels) {
  // With all logits equal the argmax is class 0, so accuracy is the share of
  // labels equal to 0 under uniform random labels.
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> lab(0, 4);
  std::vector<int> labels(10000);
  for (auto& l : labels) l = lab(rng);
  const double acc = evaluate_episode(uniform_clf(5, 3), Eigen::MatrixXd::Zero(10000, 3), labels);
  EXPECT_NEAR(acc, 0.2, 5.0 * std::sqrt(0.2 * 0.8 / 10000.0));
}
