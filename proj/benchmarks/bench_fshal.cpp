#include <benchmark/benchmark.h>

#include "fshal/base_stats.hpp"
#include "fshal/classifier.hpp"
#include "fshal/harness.hpp"
#include "fshal/ivdh.hpp"
#include "fshal/pvdh.hpp"
#include "fshal/semantic_relations.hpp"
#include "fshal/synthetic.hpp"

using namespace fshal;

namespace {

struct Fixture {
  FeatureBank bank;
  SemanticBank semantics;
  BaseClassStats tukey_stats;
  BaseSemantics base_sem;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture out;
    auto [bank, sem] = generate(SyntheticSpec{});
    out.bank = std::move(bank);
    out.semantics = std::move(sem);
    out.tukey_stats = compute_base_stats(out.bank, 0.5);
    out.base_sem = gather_base_semantics(out.tukey_stats, out.semantics);
    return out;
  }();
  return f;
}

Eigen::MatrixXd novel_support(int k) {
  const auto& f = fixture();
  const auto& cls = f.bank.classes[f.bank.split_indices(Split::novel)[0]];
  return tukey_transform(Eigen::MatrixXd(cls.features.topRows(k).cast<double>()), 0.5);
}

void BM_SelectBases(benchmark::State& state) {
  const auto& f = fixture();
  const Eigen::VectorXd x = novel_support(1).row(0).transpose();
  const Eigen::VectorXd v = f.semantics.find("novel_000")->cast<double>();
  for (auto _ : state) benchmark::DoNotOptimize(select_correlated_bases(x, v, {10, 2, 1}, f.tukey_stats, f.base_sem));
}
BENCHMARK(BM_SelectBases);

void BM_EstimateClass(benchmark::State& state) {
  const auto& f = fixture();
  const Eigen::MatrixXd x = novel_support(static_cast<int>(state.range(0)));
  const Eigen::VectorXd v = f.semantics.find("novel_000")->cast<double>();
  const SelectionParams sel{default_shortlist(static_cast<int>(state.range(0))), 2, 1};
  for (auto _ : state) benchmark::DoNotOptimize(estimate_class(x, v, sel, {}, f.tukey_stats, f.base_sem));
}
BENCHMARK(BM_EstimateClass)->Arg(1)->Arg(5);

void BM_Resample(benchmark::State& state) {
  const auto& f = fixture();
  const auto est = estimate_class(novel_support(1), f.semantics.find("novel_000")->cast<double>(), {10, 2, 1}, {},
                                  f.tukey_stats, f.base_sem);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(resample(est, static_cast<int>(state.range(0)), ++seed, 1e-6));
}
BENCHMARK(BM_Resample)->Arg(200)->Arg(500);

void BM_TrainClassifier(benchmark::State& state) {
  const int per_class = static_cast<int>(state.range(0));
  TrainSet ts;
  ts.num_classes = 5;
  const auto& f = fixture();
  for (int c = 0; c < 5; ++c) {
    const auto& cls = f.bank.classes[f.bank.split_indices(Split::novel)[static_cast<std::size_t>(c)]];
    ts.append(tukey_transform(Eigen::MatrixXd(cls.features.topRows(per_class).cast<double>()), 0.5), c,
              Provenance::resampled);
  }
  for (auto _ : state) benchmark::DoNotOptimize(train_classifier(ts, {}));
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_TrainClassifier)->Arg(2)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_FusionStep(benchmark::State& state) {
  const auto& f = fixture();
  const auto raw = compute_base_stats(f.bank, std::nullopt);
  const FusionNetwork net = init_fusion_network(64, 16, 0.3, 1);
  std::vector<FusionExample> batch;
  for (int b = 0; b < 5; ++b) {
    batch.push_back({f.bank.classes[static_cast<std::size_t>(b)].features.row(0).cast<double>().transpose(),
                     f.semantics.find(f.bank.classes[static_cast<std::size_t>(b)].id)->cast<double>(),
                     raw.prototypes.row(b).transpose()});
  }
  for (auto _ : state) benchmark::DoNotOptimize(fusion_loss_gradient(net, batch));
}
BENCHMARK(BM_FusionStep);

void BM_Episode(benchmark::State& state) {
  static Experiment exp(fixture().bank, fixture().semantics);
  RunConfig cfg;
  cfg.pipeline = static_cast<Pipeline>(state.range(0));
  cfg.episodes.episode_count = 1;
  int i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(exp.assemble_episode(cfg, i++));
  state.SetLabel(std::string(to_string(cfg.pipeline)));
}
BENCHMARK(BM_Episode)
    ->Arg(static_cast<int>(Pipeline::baseline))
    ->Arg(static_cast<int>(Pipeline::pvdh))
    ->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
