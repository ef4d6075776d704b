#pragma once

// Episode-level orchestration: assemble the training set for a pipeline
// variant, fit the per-episode classifier, score the queries and aggregate.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fshal/base_stats.hpp"
#include "fshal/classifier.hpp"
#include "fshal/episodes.hpp"
#include "fshal/feature_store.hpp"
#include "fshal/ivdh.hpp"
#include "fshal/pvdh.hpp"
#include "fshal/semantic_relations.hpp"
#include "fshal/synthetic.hpp"

namespace fshal {

// baseline: support only
// ivdh_g:   support + fused support features
// pvdh:     support + estimated prototypes + resampled rows
// pvdh_p:   support + estimated prototypes
// pvdh_v:   pvdh with visual-only base selection (semantic shortlist disabled)
// full:     union of ivdh_g and pvdh
enum class Pipeline { baseline, ivdh_g, pvdh, pvdh_p, pvdh_v, full };

std::string_view to_string(Pipeline p);
Pipeline parse_pipeline(std::string_view name);

bool uses_fusion(Pipeline p);
bool uses_prototypes(Pipeline p);
bool uses_resampling(Pipeline p);

struct DataSource {
  std::optional<std::filesystem::path> features;
  std::optional<std::filesystem::path> semantics;
  std::optional<SyntheticSpec> synthetic;
};

struct FusionSettings {
  double lambda = 0.3;
  FusionTrainConfig train;
  std::optional<std::filesystem::path> network;  // load instead of training
};

struct RunConfig {
  DataSource data;
  EpisodeSpec episodes;
  // p <= 0 selects the shot-dependent default (10 for 1-shot, 32 otherwise).
  SelectionParams selection{0, 2, 1};
  PvdhParams pvdh;
  double tau = 0.5;
  FusionSettings fusion;
  Pipeline pipeline = Pipeline::full;
  ClassifierConfig classifier;
  int workers = 1;
  std::optional<std::filesystem::path> output;
};

// Default semantic shortlist size for a shot count.
int default_shortlist(int k_shot);

struct RunResult {
  RunConfig config;
  double mean_accuracy = 0.0;
  double ci95 = 0.0;
  std::vector<double> per_episode;
  std::string prng;
  std::string version;
  std::string timestamp;
};

// 1.96 * sample standard deviation / sqrt(T); zero for T < 2.
double confidence95(std::span<const double> values);

// Reads a JSON run configuration; relative paths resolve against the file's directory.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});

// A bare JSON object with SyntheticSpec fields.
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

// Echo of every setting that affects results; worker count is left out.
std::string config_to_json(const RunConfig& cfg);
std::string result_to_json(const RunResult& result);
void write_result(const RunResult& result, const std::filesystem::path& path);

struct EpisodeData {
  Episode episode;
  TrainSet train;
  Eigen::MatrixXd query_tukey;
};

// Holds loaded banks and lazily computed base statistics / fusion networks so
// that several runs over the same data share them. Thread-safe for concurrent
// `run` calls only through its internal caches; intended use is one caller.
class Experiment {
 public:
  explicit Experiment(const DataSource& data);
  Experiment(FeatureBank features, SemanticBank semantics);

  const FeatureBank& features() const { return *features_; }
  const SemanticBank& semantics() const { return *semantics_; }

  RunResult run(const RunConfig& cfg);

  // One result per value; every run shares the episode seeds.
  std::vector<RunResult> sweep(const RunConfig& cfg, std::string_view parameter, std::span<const double> values);

  // Training set and transformed queries for a single episode.
  EpisodeData assemble_episode(const RunConfig& cfg, int index);

  const FusionNetwork& fusion_network(const RunConfig& cfg);
  std::shared_ptr<const BaseClassStats> base_stats(std::optional<double> tau);

 private:
  struct Prepared;
  Prepared prepare(const RunConfig& cfg);
  EpisodeData assemble(const RunConfig& cfg, const Prepared& prep, int index) const;

  std::shared_ptr<const FeatureBank> features_;
  std::shared_ptr<const SemanticBank> semantics_;
  BaseStatsCache stats_cache_;
  std::map<std::string, FusionNetwork> fusion_cache_;
};

RunResult run(const RunConfig& cfg);
std::vector<RunResult> sweep(const RunConfig& cfg, std::string_view parameter, std::span<const double> values);

// Applies a sweep value to a config copy. Throws unknown_parameter.
RunConfig with_parameter(const RunConfig& cfg, std::string_view parameter, double value);

struct LabeledRows {
  Eigen::MatrixXd rows;
  std::vector<std::string> labels;
  std::vector<std::string> provenance;
};

// Delimited text: header "label,provenance,f0,...", one line per row, values
// printed with enough digits to round-trip through binary32.
void export_projection(const LabeledRows& data, const std::filesystem::path& path);
LabeledRows read_projection(const std::filesystem::path& path);

}  // namespace fshal
