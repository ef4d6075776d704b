#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fshal/error.hpp"
#include "fshal/harness.hpp"

namespace {

using namespace fshal;

struct Overrides {
  std::optional<std::string> pipeline;
  std::optional<int> n_way;
  std::optional<int> k_shot;
  std::optional<int> episodes;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau;
  std::optional<double> alpha;
  std::optional<int> p;
  std::optional<int> q;
  std::optional<int> resample_count;
  std::optional<double> lambda;
  std::optional<std::string> merging;
  std::optional<int> workers;
  std::optional<std::string> output;

  void attach(CLI::App& app) {
    app.add_option("--pipeline", pipeline, "baseline, ivdh_g, pvdh, pvdh_p, pvdh_v or full");
    app.add_option("--n-way", n_way);
    app.add_option("--k-shot", k_shot);
    app.add_option("--episodes", episodes, "episode count");
    app.add_option("--seed", seed, "master episode seed");
    app.add_option("--tau", tau);
    app.add_option("--alpha", alpha);
    app.add_option("--p", p, "semantic shortlist size");
    app.add_option("--q", q, "visual picks per class");
    app.add_option("--resample-count", resample_count);
    app.add_option("--lambda", lambda);
    app.add_option("--merging", merging, "after_estimation, before_estimation or no_merging");
    app.add_option("--workers", workers, "episode worker threads");
    app.add_option("--output", output, "results file");
  }

  void apply(RunConfig& c) const {
    if (pipeline) c.pipeline = parse_pipeline(*pipeline);
    if (n_way) c.episodes.n_way = *n_way;
    if (k_shot) c.episodes.k_shot = *k_shot;
    if (episodes) c.episodes.episode_count = *episodes;
    if (seed) c.episodes.master_seed = *seed;
    if (tau) c.tau = *tau;
    if (alpha) c.pvdh.alpha = *alpha;
    if (p) c.selection.p = *p;
    if (q) c.selection.q = *q;
    if (resample_count) c.pvdh.resample_count = *resample_count;
    if (lambda) c.fusion.lambda = *lambda;
    if (merging) c.pvdh.merging = parse_merging(*merging);
    if (workers) c.workers = *workers;
    if (output) c.output = *output;
  }
};

void print_summary(const RunResult& r) {
  std::printf("%s %d-way %d-shot T=%d: %.2f +- %.2f\n", std::string(to_string(r.config.pipeline)).c_str(),
              r.config.episodes.n_way, r.config.episodes.k_shot, r.config.episodes.episode_count,
              100.0 * r.mean_accuracy, 100.0 * r.ci95);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out << text << '\n';
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> values;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) {
      throw Error(ErrorCode::invalid_argument, "bad sweep value '" + item + "'");
    }
    values.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return values;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot feature hallucination experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(FSHAL_VERSION));

  Overrides run_ov;
  std::string run_config;
  auto* run_cmd = app.add_subcommand("run", "evaluate one pipeline over a set of episodes");
  run_cmd->add_option("--config", run_config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  run_ov.attach(*run_cmd);

  Overrides sweep_ov;
  std::string sweep_config, sweep_param, sweep_values;
  auto* sweep_cmd = app.add_subcommand("sweep", "repeat a run over values of one parameter");
  sweep_cmd->add_option("--config", sweep_config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--param", sweep_param, "lambda, tau, alpha, p, q or resample_count")->required();
  sweep_cmd->add_option("--values", sweep_values, "comma-separated values")->required();
  sweep_ov.attach(*sweep_cmd);

  std::string synth_spec, synth_features = "features.fshb", synth_semantics = "semantics.fssb";
  auto* synth_cmd = app.add_subcommand("synth", "write synthetic feature and semantic banks");
  synth_cmd->add_option("--spec", synth_spec, "JSON synthetic spec")->required()->check(CLI::ExistingFile);
  synth_cmd->add_option("--features", synth_features, "feature bank output");
  synth_cmd->add_option("--semantics", synth_semantics, "semantic bank output");

  Overrides fusion_ov;
  std::string fusion_config, fusion_out = "fusion.fsfn";
  std::optional<int> fusion_iterations;
  auto* fusion_cmd = app.add_subcommand("train-fusion", "train and save the feature fusion network");
  fusion_cmd->add_option("--config", fusion_config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  fusion_cmd->add_option("--out", fusion_out, "network output");
  fusion_cmd->add_option("--iterations", fusion_iterations);
  fusion_cmd->add_option("--lambda", fusion_ov.lambda);

  std::string export_config, export_out = "episode.csv";
  int export_index = 0;
  Overrides export_ov;
  auto* export_cmd = app.add_subcommand("export", "write one episode's training rows as CSV");
  export_cmd->add_option("--config", export_config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--episode", export_index, "episode index");
  export_cmd->add_option("--out", export_out, "CSV output");
  export_cmd->add_option("--pipeline", export_ov.pipeline);
  export_cmd->add_option("--k-shot", export_ov.k_shot);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "fshal: error: %s\n", e.what());
    return 2;
  }

  try {
    if (*run_cmd) {
      RunConfig cfg = load_config(run_config);
      run_ov.apply(cfg);
      const RunResult r = run(cfg);
      print_summary(r);
      if (cfg.output) write_result(r, *cfg.output);
    } else if (*sweep_cmd) {
      RunConfig cfg = load_config(sweep_config);
      sweep_ov.apply(cfg);
      const auto values = parse_values(sweep_values);
      const auto results = sweep(cfg, sweep_param, values);
      std::string doc = "[\n";
      for (std::size_t i = 0; i < results.size(); ++i) {
        std::printf("%s=%g  ", sweep_param.c_str(), values[i]);
        print_summary(results[i]);
        doc += result_to_json(results[i]) + (i + 1 < results.size() ? ",\n" : "\n");
      }
      doc += "]";
      if (cfg.output) write_text(*cfg.output, doc);
    } else if (*synth_cmd) {
      const auto [features, semantics] = generate(load_synthetic_spec(synth_spec));
      write_bank(features, synth_features);
      write_bank(semantics, synth_semantics);
      std::printf("wrote %zu classes to %s and %s\n", features.classes.size(), synth_features.c_str(),
                  synth_semantics.c_str());
    } else if (*fusion_cmd) {
      RunConfig cfg = load_config(fusion_config);
      fusion_ov.apply(cfg);
      if (fusion_iterations) cfg.fusion.train.iterations = *fusion_iterations;
      Experiment exp(cfg.data);
      const auto trained = train_fusion(exp.features(), exp.semantics(), *exp.base_stats(std::nullopt),
                                        cfg.fusion.train, cfg.fusion.lambda);
      write_fusion_network(trained.network, fusion_out);
      std::printf("held-out loss %.6g -> %.6g (%d rows); wrote %s\n", trained.initial_heldout_loss,
                  trained.final_heldout_loss, trained.heldout_size, fusion_out.c_str());
    } else if (*export_cmd) {
      RunConfig cfg = load_config(export_config);
      export_ov.apply(cfg);
      Experiment exp(cfg.data);
      const EpisodeData data = exp.assemble_episode(cfg, export_index);
      LabeledRows rows;
      rows.rows = data.train.rows;
      for (std::size_t r = 0; r < data.train.labels.size(); ++r) {
        const int label = data.train.labels[r];
        rows.labels.push_back(data.episode.class_ids[static_cast<std::size_t>(label)]);
        rows.provenance.emplace_back(to_string(data.train.provenance[r]));
      }
      export_projection(rows, export_out);
      std::printf("wrote %zu rows to %s\n", rows.labels.size(), export_out.c_str());
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "fshal: error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fshal: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
