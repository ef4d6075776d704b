// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fshal/base_stats.hpp"
#include "fshal/classifier.hpp"
#include "fshal/episodes.hpp"
#include "fshal/error.hpp"
#include "fshal/feature_store.hpp"
#include "fshal/harness.hpp"
#include "fshal/ivdh.hpp"
#include "fshal/pvdh.hpp"
#include "fshal/semantic_relations.hpp"
#include "fshal/synthetic.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fshal;

namespace {

constexpr int kEpisodes = 500;
constexpr std::uint64_t kSeed = 1;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const char* id, const char* title, double limit_seconds, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (limit_seconds > 0.0 && secs > limit_seconds) {
    out.pass = false;
    out.detail += "; over time limit " + std::to_string(static_cast<int>(limit_seconds)) + " s";
  }
  if (!out.pass) ++failures;
  std::printf("%s %s %s: %s (%.1f s)\n", id, out.pass ? "PASS" : "FAIL", title, out.detail.c_str(), secs);
  std::fflush(stdout);
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, static_cast<double>(args)...);
  return buf;
}

struct World {
  FeatureBank bank;
  SemanticBank semantics;
};

const World& default_world() {
  static const World w = [] {
    auto [f, s] = generate(SyntheticSpec{});
    return World{std::move(f), std::move(s)};
  }();
  return w;
}

Experiment& default_experiment() {
  static Experiment exp(default_world().bank, default_world().semantics);
  return exp;
}

RunConfig default_config(Pipeline p, int k_shot = 1) {
  RunConfig c;
  c.data.synthetic = SyntheticSpec{};
  c.episodes.episode_count = kEpisodes;
  c.episodes.master_seed = kSeed;
  c.episodes.k_shot = k_shot;
  c.pipeline = p;
  return c;
}

double pct(const RunResult& r) { return 100.0 * r.mean_accuracy; }

// Shared between A2 and A3.
struct SemanticRun {
  double baseline = 0, pvdh = 0, pvdh_p = 0, pvdh_v = 0;
};

const SemanticRun& semantic_run() {
  static const SemanticRun r = [] {
    SemanticRun s;
    s.baseline = pct(default_experiment().run(default_config(Pipeline::baseline)));
    s.pvdh = pct(default_experiment().run(default_config(Pipeline::pvdh)));
    s.pvdh_p = pct(default_experiment().run(default_config(Pipeline::pvdh_p)));
    s.pvdh_v = pct(default_experiment().run(default_config(Pipeline::pvdh_v)));
    return s;
  }();
  return r;
}

Outcome a1() {
  const auto& w = default_world();
  const auto stats = compute_base_stats(w.bank, 0.5);
  const auto base_sem = gather_base_semantics(stats, w.semantics);
  oracle::Bases ob;
  ob.ids = stats.ids;
  ob.prototypes = oracle::to_mat(stats.prototypes);
  for (const auto& c : stats.covariances) ob.covs.push_back(oracle::to_mat(c));
  ob.semantics = oracle::to_mat(base_sem.vectors);

  const auto novel = w.bank.split_indices(Split::novel);
  std::mt19937_64 rng(kSeed);
  double worst = 0.0;
  int selection_mismatch = 0;
  for (int t = 0; t < 100; ++t) {
    const auto& cls = w.bank.classes[novel[rng() % novel.size()]];
    const int k = 1 + static_cast<int>(rng() % 5);
    const auto rows = sample_without_replacement(static_cast<int>(cls.features.rows()), k, rng);
    Eigen::MatrixXd raw(k, w.bank.dim);
    for (int r = 0; r < k; ++r) raw.row(r) = cls.features.row(rows[static_cast<std::size_t>(r)]).cast<double>();
    const Eigen::MatrixXd x = tukey_transform(raw, 0.5);
    const Eigen::VectorXd v = w.semantics.find(cls.id)->cast<double>();
    const SelectionParams sel{default_shortlist(k), 2, 1};

    for (int r = 0; r < k; ++r) {
      const Eigen::VectorXd f = x.row(r).transpose();
      if (select_correlated_bases(f, v, sel, stats, base_sem) !=
          oracle::select(oracle::to_vec(f), oracle::to_vec(v), sel.p, sel.q, ob)) {
        ++selection_mismatch;
      }
    }
    PvdhParams p;
    p.merging = MergingStrategy::after_estimation;
    const auto est = estimate_class(x, v, sel, p, stats, base_sem);
    const auto want = oracle::estimate(oracle::to_mat(x), oracle::to_vec(v), sel.p, sel.q, p.alpha, p.beta, ob, false);
    for (Eigen::Index i = 0; i < est.mu_hat.size(); ++i) {
      worst = std::max(worst, std::abs(est.mu_hat(i) - want.mu[static_cast<std::size_t>(i)]));
      for (Eigen::Index j = 0; j < est.mu_hat.size(); ++j) {
        worst = std::max(worst, std::abs(est.sigma_hat(i, j) - want.sigma[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]));
      }
    }
  }
  return {worst <= 1e-10 && selection_mismatch == 0,
          fmt("max |estimate - oracle| = %.3g (limit 1e-10), selection mismatches = %.0f", worst, selection_mismatch)};
}

Outcome a2() {
  const auto& r = semantic_run();
  const double gain = r.pvdh - r.baseline, semantic = r.pvdh - r.pvdh_v;
  return {gain >= 3.0 && semantic >= 0.5,
          fmt("baseline %.2f, pvdh %.2f (+%.2f, need 3), pvdh_v %.2f (pvdh ahead by %.2f, need 0.5)", r.baseline,
              r.pvdh, gain, r.pvdh_v, semantic)};
}

Outcome a3() {
  const auto& r = semantic_run();
  return {r.pvdh_p <= r.pvdh + 0.3, fmt("pvdh_p %.2f vs pvdh %.2f (tolerance 0.3)", r.pvdh_p, r.pvdh)};
}

Outcome a4() {
  const std::vector<double> counts = {0, 200, 500};
  const auto res = default_experiment().sweep(default_config(Pipeline::pvdh), "resample_count", counts);
  const double a0 = pct(res[0]), a200 = pct(res[1]), a500 = pct(res[2]);
  return {a200 - a0 >= 2.0 && std::abs(a200 - a500) <= 1.0,
          fmt("R=0 %.2f, R=200 %.2f (+%.2f, need 2), R=500 %.2f", a0, a200, a200 - a0, a500) +
              fmt(" (|200-500| = %.2f, limit 1)", std::abs(a200 - a500))};
}

Outcome a5() {
  const MergingStrategy all[] = {MergingStrategy::after_estimation, MergingStrategy::before_estimation,
                                 MergingStrategy::no_merging};
  double acc[3];
  for (int s = 0; s < 3; ++s) {
    auto cfg = default_config(Pipeline::pvdh, 5);
    cfg.pvdh.merging = all[s];
    acc[s] = pct(default_experiment().run(cfg));
  }
  const double spread = std::max({acc[0], acc[1], acc[2]}) - std::min({acc[0], acc[1], acc[2]});

  bool identical = true;
  std::vector<double> first;
  for (int s = 0; s < 3; ++s) {
    auto cfg = default_config(Pipeline::pvdh, 1);
    cfg.episodes.episode_count = 100;
    cfg.pvdh.merging = all[s];
    const auto r = default_experiment().run(cfg);
    if (s == 0) first = r.per_episode;
    else identical = identical && r.per_episode == first;
    for (int i = 0; i < 100 && identical; i += 9) {
      const auto data = default_experiment().assemble_episode(cfg, i);
      cfg.pvdh.merging = all[0];
      identical = default_experiment().assemble_episode(cfg, i).train.rows == data.train.rows;
      cfg.pvdh.merging = all[s];
    }
  }
  return {spread <= 1.5 && identical,
          fmt("5-shot after %.2f, before %.2f, none %.2f (spread %.2f, limit 1.5)", acc[0], acc[1], acc[2], spread) +
              (identical ? "; 1-shot bit-identical" : "; 1-shot results differ")};
}

Outcome a6() {
  std::mt19937_64 rng(kSeed);
  std::uniform_int_distribution<int> dd(1, 8), mm(1, 4), nn(2, 4);
  std::uniform_real_distribution<double> pos(0.5, 2.0);
  std::normal_distribution<double> g;
  double fusion_worst = 0.0, clf_worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const int d = dd(rng), m = mm(rng);
    FusionNetwork net = init_fusion_network(d, m, 0.3, rng());
    net.bias = Eigen::VectorXd::Random(d) * 0.5;
    std::vector<FusionExample> batch;
    for (int b = 0; b < 3; ++b) {
      FusionExample ex{Eigen::VectorXd(d), Eigen::VectorXd(m), Eigen::VectorXd(d)};
      for (int i = 0; i < d; ++i) ex.feature(i) = pos(rng), ex.target(i) = pos(rng);
      for (int i = 0; i < m; ++i) ex.semantic(i) = g(rng);
      batch.push_back(ex);
    }
    const auto fg = fusion_loss_gradient(net, batch);
    auto floss = [&] { return fusion_loss(net, batch); };
    const double fscale = std::max(fg.d_weights.cwiseAbs().maxCoeff(), fg.d_bias.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < net.weights.size(); ++i) {
      fusion_worst = std::max(fusion_worst, oracle::relative_error(fg.d_weights.data()[i],
                                                                   oracle::central_difference(net.weights.data()[i], floss),
                                                                   1e-3 * fscale));
    }
    for (Eigen::Index i = 0; i < d; ++i) {
      fusion_worst = std::max(fusion_worst, oracle::relative_error(fg.d_bias(i), oracle::central_difference(net.bias(i), floss),
                                                                   1e-3 * fscale));
    }

    const int n = nn(rng);
    TrainSet ts;
    ts.num_classes = n;
    for (int c = 0; c < n; ++c) {
      Eigen::MatrixXd block(3, d);
      for (Eigen::Index i = 0; i < block.size(); ++i) block.data()[i] = g(rng) + c;
      ts.append(block, c, Provenance::support);
    }
    LinearClassifier clf{Eigen::MatrixXd(n, d), Eigen::VectorXd(n), 0.01};
    for (Eigen::Index i = 0; i < clf.weights.size(); ++i) clf.weights.data()[i] = g(rng);
    for (Eigen::Index i = 0; i < n; ++i) clf.bias(i) = g(rng);
    const auto cg = classifier_loss_gradient(clf, ts);
    auto closs = [&] { return classifier_loss_gradient(clf, ts).loss; };
    const double cscale = std::max(cg.d_weights.cwiseAbs().maxCoeff(), cg.d_bias.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < clf.weights.size(); ++i) {
      clf_worst = std::max(clf_worst, oracle::relative_error(cg.d_weights.data()[i],
                                                             oracle::central_difference(clf.weights.data()[i], closs),
                                                             1e-3 * cscale));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      clf_worst = std::max(clf_worst, oracle::relative_error(cg.d_bias(i), oracle::central_difference(clf.bias(i), closs),
                                                             1e-3 * cscale));
    }
  }

  NovelClassEstimate est{Eigen::Vector2d(1, 2), Eigen::Vector2d(1, 4).asDiagonal(), {}};
  const Eigen::MatrixXd draws = resample(est, 20000, kSeed, 1e-6);
  const Eigen::VectorXd mean = draws.colwise().mean().transpose();
  const Eigen::MatrixXd cov = compute_covariance(draws, mean);
  const double mean_err = (mean - est.mu_hat).cwiseAbs().maxCoeff();
  const double var_err = std::max(std::abs(cov(0, 0) / 1.0 - 1.0), std::abs(cov(1, 1) / 4.0 - 1.0));

  double sum_err = 0.0;
  for (int t = 0; t < 50; ++t) {
    LinearClassifier clf{Eigen::MatrixXd(5, 8), Eigen::VectorXd(5), 0.0};
    for (Eigen::Index i = 0; i < clf.weights.size(); ++i) clf.weights.data()[i] = 10.0 * g(rng);
    for (Eigen::Index i = 0; i < 5; ++i) clf.bias(i) = 10.0 * g(rng);
    Eigen::MatrixXd x(20, 8);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 10.0 * g(rng);
    sum_err = std::max(sum_err, (predict_proba(clf, x).rowwise().sum().array() - 1.0).abs().maxCoeff());
  }
  const bool ok = fusion_worst <= 1e-5 && clf_worst <= 1e-5 && mean_err <= 0.05 && var_err <= 0.05 && sum_err <= 1e-9;
  return {ok, fmt("grad rel err fusion %.2g, classifier %.2g; resample mean err %.3f, var rel err %.3f", fusion_worst,
                  clf_worst, mean_err, var_err) +
                  fmt("; softmax row-sum err %.2g", sum_err)};
}

std::string without_timestamp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.find("\"timestamp\"") == std::string::npos) out += line + '\n';
  }
  return out;
}

Outcome a7() {
  testutil::TempDir dir;
  RunConfig cfg = default_config(Pipeline::full);
  cfg.episodes.episode_count = 40;
  cfg.fusion.train.iterations = 2000;
  std::vector<std::string> files;
  for (int workers : {1, 1, 3}) {
    cfg.workers = workers;
    const auto r = run(cfg);
    const auto path = dir.path() / ("r" + std::to_string(files.size()) + ".json");
    write_result(r, path);
    files.push_back(without_timestamp(path));
  }
  const bool same = files[0] == files[1] && files[0] == files[2];
  return {same, same ? "results identical across reruns and 1 vs 3 workers" : "results files differ"};
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected an error");
}

Outcome a8() {
  testutil::TempDir dir;
  const auto [feats, sems] = generate(SyntheticSpec{});
  ActivationMapSet maps;
  for (int i = 0; i < 4; ++i) {
    maps.entries.push_back({"img" + std::to_string(i), "base_00" + std::to_string(i),
                            testutil::random_rows(7, 5, static_cast<std::uint64_t>(i))});
  }
  write_bank(feats, dir.path() / "f.bin");
  write_bank(sems, dir.path() / "s.bin");
  write_bank(maps, dir.path() / "m.bin");
  const bool round = load_feature_bank(dir.path() / "f.bin") == feats &&
                     load_semantic_bank(dir.path() / "s.bin") == sems &&
                     load_activation_maps(dir.path() / "m.bin") == maps;
  write_bank(load_feature_bank(dir.path() / "f.bin"), dir.path() / "f2.bin");
  const bool bytes = testutil::read_bytes(dir.path() / "f.bin") == testutil::read_bytes(dir.path() / "f2.bin");

  const auto base = testutil::read_bytes(dir.path() / "f.bin");
  auto corrupt = [&](const char* name, const std::function<void(std::vector<unsigned char>&)>& edit) {
    auto b = base;
    edit(b);
    testutil::write_bytes(dir.path() / name, b);
    return code_of([&] { load_feature_bank(dir.path() / name); });
  };
  int wrong = 0;
  wrong += code_of([&] { load_feature_bank(dir.path() / "absent.bin"); }) != ErrorCode::io;
  wrong += corrupt("magic", [](auto& b) { b[0] = 'X'; }) != ErrorCode::unrecognized_format;
  wrong += corrupt("version", [](auto& b) { b[4] = 9; }) != ErrorCode::unsupported_version;
  wrong += corrupt("short", [](auto& b) { b.resize(b.size() - 3); }) != ErrorCode::truncated_payload;
  wrong += corrupt("negative", [](auto& b) {
             const std::size_t n = b.size();
             b[n - 4] = 0x00, b[n - 3] = 0x00, b[n - 2] = 0x80, b[n - 1] = 0xBF;
           }) != ErrorCode::invalid_bank;
  wrong += corrupt("nan", [](auto& b) {
             const std::size_t n = b.size();
             b[n - 4] = 0x00, b[n - 3] = 0x00, b[n - 2] = 0xC0, b[n - 1] = 0x7F;
           }) != ErrorCode::invalid_bank;
  wrong += code_of([&] { load_semantic_bank(dir.path() / "f.bin"); }) != ErrorCode::unrecognized_format;
  return {round && bytes && wrong == 0,
          std::string(round ? "round-trips exact" : "round-trip mismatch") + (bytes ? ", rewrite byte-identical" : "") +
              fmt(", %.0f of 7 corruption cases misclassified", wrong)};
}

Outcome a9() {
  auto cfg = default_config(Pipeline::ivdh_g);
  cfg.fusion.train.iterations = 5000;
  const double ivdh = pct(default_experiment().run(cfg));
  const double base = semantic_run().baseline;

  const auto& w = default_world();
  const FusionNetwork& net = default_experiment().fusion_network(cfg);
  double d_orig = 0.0, d_hall = 0.0;
  int rows = 0;
  for (int i = 0; i < kEpisodes; ++i) {
    const Episode ep = sample_episode(w.bank, cfg.episodes, i);
    const auto hall = hallucinate_support(net, ep.support, ep.support_labels, ep.class_ids, w.semantics);
    for (Eigen::Index r = 0; r < ep.support.rows(); ++r) {
      const auto& id = ep.class_ids[static_cast<std::size_t>(ep.support_labels[static_cast<std::size_t>(r)])];
      const Eigen::VectorXd mean = compute_prototype(w.bank.find(id)->features.cast<double>());
      d_orig += (ep.support.row(r).transpose() - mean).norm();
      d_hall += (hall.rows.row(r).transpose() - mean).norm();
      ++rows;
    }
  }
  d_orig /= rows;
  d_hall /= rows;
  return {ivdh >= base - 0.3 && d_hall < d_orig,
          fmt("ivdh_g %.2f vs baseline %.2f (floor -0.3); mean distance to class mean %.4f hallucinated vs %.4f original",
              ivdh, base, d_hall, d_orig)};
}

}  // namespace

int main() {
  std::printf("synthetic default spec, T=%d, seed %llu\n", kEpisodes, static_cast<unsigned long long>(kSeed));
  report("A1", "oracle equivalence", 60, a1);
  report("A2", "semantic guidance gain", 300, a2);
  report("A3", "ablation ordering", 0, a3);
  report("A4", "resample count trend", 600, a4);
  report("A5", "merging strategies", 0, a5);
  report("A6", "numerical integrity", 0, a6);
  report("A7", "determinism", 0, a7);
  report("A8", "format round-trips", 0, a8);
  report("A9", "instance-view hallucination", 0, a9);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
