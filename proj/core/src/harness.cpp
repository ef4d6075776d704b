#include "fshal/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "fshal/error.hpp"

#ifndef FSHAL_VERSION
#define FSHAL_VERSION "dev"
#endif

namespace fshal {

using nlohmann::json;

namespace {

// Stream offsets for seeds derived from an episode seed.
constexpr std::uint64_t kResampleStream = 0x5245534D;  // "RESM"

void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw Error(ErrorCode::invalid_argument, std::string(where) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw Error(ErrorCode::invalid_argument, "unknown key '" + key + "' in " + std::string(where));
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("config key '") + key + "': " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

json synthetic_to_json(const SyntheticSpec& s) {
  return {{"n_base", s.n_base},   {"n_validation", s.n_validation},
          {"n_novel", s.n_novel}, {"d", s.d},
          {"m", s.m},             {"samples_per_class", s.samples_per_class},
          {"rho", s.rho},         {"spread", s.spread},
          {"mean_scale", s.mean_scale}, {"mean_shift", s.mean_shift},
          {"seed", s.seed}};
}

SyntheticSpec synthetic_from_json(const json& j) {
  check_keys(j, "data.synthetic",
             {"n_base", "n_validation", "n_novel", "d", "m", "samples_per_class", "rho", "spread", "mean_scale",
              "mean_shift", "seed"});
  SyntheticSpec s;
  read(j, "n_base", s.n_base);
  read(j, "n_validation", s.n_validation);
  read(j, "n_novel", s.n_novel);
  read(j, "d", s.d);
  read(j, "m", s.m);
  read(j, "samples_per_class", s.samples_per_class);
  read(j, "rho", s.rho);
  read(j, "spread", s.spread);
  read(j, "mean_scale", s.mean_scale);
  read(j, "mean_shift", s.mean_shift);
  read(j, "seed", s.seed);
  return s;
}

json config_json(const RunConfig& c) {
  json data = json::object();
  if (c.data.synthetic) data["synthetic"] = synthetic_to_json(*c.data.synthetic);
  if (c.data.features) data["features"] = c.data.features->generic_string();
  if (c.data.semantics) data["semantics"] = c.data.semantics->generic_string();

  json fusion = {{"lambda", c.fusion.lambda},
                 {"iterations", c.fusion.train.iterations},
                 {"batch_size", c.fusion.train.batch_size},
                 {"learning_rate", c.fusion.train.learning_rate},
                 {"seed", c.fusion.train.seed},
                 {"holdout_stride", c.fusion.train.holdout_stride}};
  if (c.fusion.network) fusion["network"] = c.fusion.network->generic_string();

  const auto& w = c.classifier.provenance_weights;
  json out = {
      {"data", data},
      {"episodes",
       {{"n_way", c.episodes.n_way},
        {"k_shot", c.episodes.k_shot},
        {"m_query", c.episodes.m_query},
        {"episode_count", c.episodes.episode_count},
        {"seed", c.episodes.master_seed}}},
      {"selection", {{"p", c.selection.p}, {"q", c.selection.q}, {"k", c.selection.k}}},
      {"pvdh",
       {{"alpha", c.pvdh.alpha},
        {"beta", c.pvdh.beta},
        {"resample_count", c.pvdh.resample_count},
        {"merging", std::string(to_string(c.pvdh.merging))},
        {"jitter", c.pvdh.jitter}}},
      {"tau", c.tau},
      {"fusion", fusion},
      {"pipeline", std::string(to_string(c.pipeline))},
      {"classifier",
       {{"l2", c.classifier.l2},
        {"iterations", c.classifier.iterations},
        {"learning_rate", c.classifier.learning_rate},
        {"weights", {{"support", w[0]}, {"ivdh", w[1]}, {"prototype", w[2]}, {"resampled", w[3]}}}}},
  };
  if (c.output) out["output"] = c.output->generic_string();
  return out;
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string fusion_key(const FusionSettings& f) {
  std::ostringstream os;
  os << std::setprecision(17) << f.lambda << '|' << f.train.iterations << '|' << f.train.batch_size << '|'
     << f.train.learning_rate << '|' << f.train.seed << '|' << f.train.holdout_stride << '|'
     << (f.network ? f.network->string() : std::string());
  return os.str();
}

}  // namespace

std::string_view to_string(Pipeline p) {
  switch (p) {
    case Pipeline::baseline: return "baseline";
    case Pipeline::ivdh_g: return "ivdh_g";
    case Pipeline::pvdh: return "pvdh";
    case Pipeline::pvdh_p: return "pvdh_p";
    case Pipeline::pvdh_v: return "pvdh_v";
    case Pipeline::full: return "full";
  }
  return "unknown";
}

Pipeline parse_pipeline(std::string_view name) {
  for (auto p : {Pipeline::baseline, Pipeline::ivdh_g, Pipeline::pvdh, Pipeline::pvdh_p, Pipeline::pvdh_v,
                 Pipeline::full}) {
    if (name == to_string(p)) return p;
  }
  throw Error(ErrorCode::invalid_argument, "unknown pipeline '" + std::string(name) + "'");
}

bool uses_fusion(Pipeline p) { return p == Pipeline::ivdh_g || p == Pipeline::full; }

bool uses_prototypes(Pipeline p) {
  return p == Pipeline::pvdh || p == Pipeline::pvdh_p || p == Pipeline::pvdh_v || p == Pipeline::full;
}

bool uses_resampling(Pipeline p) { return p == Pipeline::pvdh || p == Pipeline::pvdh_v || p == Pipeline::full; }

int default_shortlist(int k_shot) { return k_shot <= 1 ? 10 : 32; }

double confidence95(std::span<const double> values) {
  const auto n = values.size();
  if (n < 2) return 0.0;
  // Shifted by the first value so constant input gives exactly zero.
  const double k = values[0];
  double sum = 0.0, sum_sq = 0.0;
  for (double v : values) {
    sum += v - k;
    sum_sq += (v - k) * (v - k);
  }
  const double dn = static_cast<double>(n);
  const double sd = std::sqrt(std::max(0.0, (sum_sq - sum * sum / dn) / (dn - 1.0)));
  return 1.96 * sd / std::sqrt(static_cast<double>(n));
}

RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::invalid_argument, std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "config",
             {"data", "episodes", "selection", "pvdh", "tau", "fusion", "pipeline", "classifier", "workers", "output"});

  RunConfig c;
  if (j.contains("data")) {
    const auto& d = j["data"];
    check_keys(d, "data", {"features", "semantics", "synthetic"});
    if (d.contains("synthetic")) c.data.synthetic = synthetic_from_json(d["synthetic"]);
    if (d.contains("features")) c.data.features = resolve(base_dir, d["features"].get<std::string>());
    if (d.contains("semantics")) c.data.semantics = resolve(base_dir, d["semantics"].get<std::string>());
  }
  if (j.contains("episodes")) {
    const auto& e = j["episodes"];
    check_keys(e, "episodes", {"n_way", "k_shot", "m_query", "episode_count", "seed"});
    read(e, "n_way", c.episodes.n_way);
    read(e, "k_shot", c.episodes.k_shot);
    read(e, "m_query", c.episodes.m_query);
    read(e, "episode_count", c.episodes.episode_count);
    read(e, "seed", c.episodes.master_seed);
  }
  if (j.contains("selection")) {
    const auto& s = j["selection"];
    check_keys(s, "selection", {"p", "q", "k"});
    read(s, "p", c.selection.p);
    read(s, "q", c.selection.q);
    read(s, "k", c.selection.k);
  }
  if (j.contains("pvdh")) {
    const auto& p = j["pvdh"];
    check_keys(p, "pvdh", {"alpha", "beta", "resample_count", "merging", "jitter"});
    read(p, "alpha", c.pvdh.alpha);
    read(p, "beta", c.pvdh.beta);
    read(p, "resample_count", c.pvdh.resample_count);
    read(p, "jitter", c.pvdh.jitter);
    if (p.contains("merging")) c.pvdh.merging = parse_merging(p["merging"].get<std::string>());
  }
  read(j, "tau", c.tau);
  if (j.contains("fusion")) {
    const auto& f = j["fusion"];
    check_keys(f, "fusion", {"lambda", "iterations", "batch_size", "learning_rate", "seed", "holdout_stride", "network"});
    read(f, "lambda", c.fusion.lambda);
    read(f, "iterations", c.fusion.train.iterations);
    read(f, "batch_size", c.fusion.train.batch_size);
    read(f, "learning_rate", c.fusion.train.learning_rate);
    read(f, "seed", c.fusion.train.seed);
    read(f, "holdout_stride", c.fusion.train.holdout_stride);
    if (f.contains("network")) c.fusion.network = resolve(base_dir, f["network"].get<std::string>());
  }
  if (j.contains("pipeline")) c.pipeline = parse_pipeline(j["pipeline"].get<std::string>());
  if (j.contains("classifier")) {
    const auto& k = j["classifier"];
    check_keys(k, "classifier", {"l2", "iterations", "learning_rate", "weights"});
    read(k, "l2", c.classifier.l2);
    read(k, "iterations", c.classifier.iterations);
    read(k, "learning_rate", c.classifier.learning_rate);
    if (k.contains("weights")) {
      const auto& w = k["weights"];
      check_keys(w, "classifier.weights", {"support", "ivdh", "prototype", "resampled"});
      auto& pw = c.classifier.provenance_weights;
      read(w, "support", pw[0]);
      read(w, "ivdh", pw[1]);
      read(w, "prototype", pw[2]);
      read(w, "resampled", pw[3]);
    }
  }
  read(j, "workers", c.workers);
  if (j.contains("output")) c.output = resolve(base_dir, j["output"].get<std::string>());
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open synthetic spec '" + path.string() + "'");
  try {
    return synthetic_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::invalid_argument, std::string("synthetic spec is not valid JSON: ") + e.what());
  }
}

std::string config_to_json(const RunConfig& cfg) { return config_json(cfg).dump(2); }

std::string result_to_json(const RunResult& r) {
  json out = {{"config", config_json(r.config)},
              {"mean_accuracy", r.mean_accuracy},
              {"ci95", r.ci95},
              {"per_episode", r.per_episode},
              {"metadata",
               {{"seed", r.config.episodes.master_seed},
                {"prng", r.prng},
                {"version", r.version},
                {"timestamp", r.timestamp}}}};
  return out.dump(2);
}

void write_result(const RunResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out << result_to_json(result) << '\n';
  if (!out) throw Error(ErrorCode::io, "write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------

struct Experiment::Prepared {
  std::shared_ptr<const BaseClassStats> tukey_stats;
  BaseSemantics base_semantics;
  const FusionNetwork* fusion = nullptr;
  SelectionParams selection;
};

Experiment::Experiment(const DataSource& data) {
  if (data.synthetic) {
    if (data.features || data.semantics) {
      throw Error(ErrorCode::invalid_argument, "data source is either synthetic or a pair of bank files, not both");
    }
    auto [f, s] = generate(*data.synthetic);
    features_ = std::make_shared<const FeatureBank>(std::move(f));
    semantics_ = std::make_shared<const SemanticBank>(std::move(s));
  } else {
    if (!data.features || !data.semantics) {
      throw Error(ErrorCode::invalid_argument, "data source needs both a feature bank and a semantic bank");
    }
    features_ = std::make_shared<const FeatureBank>(load_feature_bank(*data.features));
    semantics_ = std::make_shared<const SemanticBank>(load_semantic_bank(*data.semantics));
  }
  const auto report = validate_pair(*features_, *semantics_);
  if (!report.empty()) throw Error(ErrorCode::invalid_bank, report.issues.front().message);
}

Experiment::Experiment(FeatureBank features, SemanticBank semantics)
    : features_(std::make_shared<const FeatureBank>(std::move(features))),
      semantics_(std::make_shared<const SemanticBank>(std::move(semantics))) {
  validate(*features_);
  validate(*semantics_);
  const auto report = validate_pair(*features_, *semantics_);
  if (!report.empty()) throw Error(ErrorCode::invalid_bank, report.issues.front().message);
}

std::shared_ptr<const BaseClassStats> Experiment::base_stats(std::optional<double> tau) {
  return stats_cache_.get(*features_, tau);
}

const FusionNetwork& Experiment::fusion_network(const RunConfig& cfg) {
  const std::string key = fusion_key(cfg.fusion);
  auto it = fusion_cache_.find(key);
  if (it != fusion_cache_.end()) return it->second;

  FusionNetwork net;
  if (cfg.fusion.network) {
    net = load_fusion_network(*cfg.fusion.network);
    if (net.feature_dim() != static_cast<Eigen::Index>(features_->dim) ||
        net.semantic_dim() != static_cast<Eigen::Index>(semantics_->dim)) {
      throw Error(ErrorCode::dimension_mismatch, "fusion network does not match the banks");
    }
  } else {
    net = train_fusion(*features_, *semantics_, *base_stats(std::nullopt), cfg.fusion.train, cfg.fusion.lambda).network;
  }
  return fusion_cache_.emplace(key, std::move(net)).first->second;
}

Experiment::Prepared Experiment::prepare(const RunConfig& cfg) {
  check_episode_spec(*features_, cfg.episodes);
  if (cfg.workers < 1) throw Error(ErrorCode::invalid_argument, "workers must be positive");
  Prepared prep;
  if (uses_prototypes(cfg.pipeline)) {
    prep.tukey_stats = base_stats(cfg.tau);
    prep.base_semantics = gather_base_semantics(*prep.tukey_stats, *semantics_);
    const int n_base = static_cast<int>(prep.tukey_stats->size());
    prep.selection = cfg.selection;
    if (prep.selection.p <= 0) prep.selection.p = std::min(default_shortlist(cfg.episodes.k_shot), n_base);
    // Visual-only selection: the semantic shortlist keeps every base class.
    if (cfg.pipeline == Pipeline::pvdh_v) prep.selection.p = n_base;
    check_selection_params(prep.selection, prep.tukey_stats->size());
  }
  if (uses_fusion(cfg.pipeline)) prep.fusion = &fusion_network(cfg);
  return prep;
}

EpisodeData Experiment::assemble(const RunConfig& cfg, const Prepared& prep, int index) const {
  EpisodeData out;
  out.episode = sample_episode(*features_, cfg.episodes, index);
  const Episode& ep = out.episode;
  const int n = cfg.episodes.n_way;
  const int k = cfg.episodes.k_shot;

  const Eigen::MatrixXd support_t = tukey_transform(ep.support, cfg.tau);
  out.query_tukey = tukey_transform(ep.query, cfg.tau);

  TrainSet& ts = out.train;
  ts.num_classes = n;
  ts.append(support_t, ep.support_labels, Provenance::support);

  if (uses_fusion(cfg.pipeline)) {
    const auto hall = hallucinate_support(*prep.fusion, ep.support, ep.support_labels, ep.class_ids, *semantics_);
    ts.append(tukey_transform(hall.rows, cfg.tau), hall.labels, Provenance::ivdh);
  }

  if (uses_prototypes(cfg.pipeline)) {
    Eigen::MatrixXd prototypes(n, support_t.cols());
    std::vector<NovelClassEstimate> estimates;
    for (int j = 0; j < n; ++j) {
      const Eigen::VectorXd v_y = semantics_->find(ep.class_ids[static_cast<std::size_t>(j)])->cast<double>();
      estimates.push_back(
          estimate_class(support_t.middleRows(j * k, k), v_y, prep.selection, cfg.pvdh, *prep.tukey_stats,
                         prep.base_semantics));
      prototypes.row(j) = estimates.back().mu_hat.transpose();
    }
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) labels[static_cast<std::size_t>(j)] = j;
    ts.append(prototypes, labels, Provenance::prototype);

    if (uses_resampling(cfg.pipeline) && cfg.pvdh.resample_count > 0) {
      for (int j = 0; j < n; ++j) {
        const auto seed = derive_episode_seed(ep.seed ^ kResampleStream, static_cast<std::uint64_t>(j));
        ts.append(resample(estimates[static_cast<std::size_t>(j)], cfg.pvdh.resample_count, seed, cfg.pvdh.jitter),
                  j, Provenance::resampled);
      }
    }
  }
  return out;
}

EpisodeData Experiment::assemble_episode(const RunConfig& cfg, int index) {
  const Prepared prep = prepare(cfg);
  return assemble(cfg, prep, index);
}

RunResult Experiment::run(const RunConfig& cfg) {
  const Prepared prep = prepare(cfg);
  const int total = cfg.episodes.episode_count;

  RunResult result;
  result.config = cfg;
  result.per_episode.assign(static_cast<std::size_t>(total), 0.0);

  std::atomic<int> next{0};
  std::mutex error_mutex;
  int failed_index = std::numeric_limits<int>::max();
  std::exception_ptr failure;

  auto worker = [&]() {
    for (int i = next.fetch_add(1); i < total; i = next.fetch_add(1)) {
      try {
        const EpisodeData data = assemble(cfg, prep, i);
        const LinearClassifier clf = train_classifier(data.train, cfg.classifier);
        result.per_episode[static_cast<std::size_t>(i)] =
            evaluate_episode(clf, data.query_tukey, data.episode.query_labels);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        // Report the lowest failing index so errors do not depend on scheduling.
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };

  const int pool = std::min(cfg.workers, total);
  if (pool <= 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (int t = 0; t < pool; ++t) threads.emplace_back(worker);
  }

  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const Error& e) {
      throw Error(e.code(), "episode " + std::to_string(failed_index) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorCode::invalid_argument, "episode " + std::to_string(failed_index) + ": " + e.what());
    }
  }

  double sum = 0.0;
  for (double a : result.per_episode) sum += a;
  result.mean_accuracy = sum / static_cast<double>(total);
  result.ci95 = confidence95(result.per_episode);
  result.prng = kRngName;
  result.version = FSHAL_VERSION;
  result.timestamp = timestamp_utc();
  return result;
}

RunConfig with_parameter(const RunConfig& cfg, std::string_view parameter, double value) {
  RunConfig c = cfg;
  auto as_int = [&](const char* name) {
    if (value != std::floor(value)) {
      throw Error(ErrorCode::invalid_argument, std::string(name) + " takes integer values");
    }
    return static_cast<int>(value);
  };
  if (parameter == "lambda") c.fusion.lambda = value;
  else if (parameter == "tau") c.tau = value;
  else if (parameter == "alpha") c.pvdh.alpha = value;
  else if (parameter == "p") c.selection.p = as_int("p");
  else if (parameter == "q") c.selection.q = as_int("q");
  else if (parameter == "resample_count") c.pvdh.resample_count = as_int("resample_count");
  else throw Error(ErrorCode::unknown_parameter, "'" + std::string(parameter) +
                                                     "' (expected lambda, tau, alpha, p, q or resample_count)");
  return c;
}

std::vector<RunResult> Experiment::sweep(const RunConfig& cfg, std::string_view parameter,
                                         std::span<const double> values) {
  std::vector<RunConfig> configs;
  for (double v : values) configs.push_back(with_parameter(cfg, parameter, v));
  std::vector<RunResult> out;
  for (const auto& c : configs) out.push_back(run(c));
  return out;
}

RunResult run(const RunConfig& cfg) {
  Experiment exp(cfg.data);
  return exp.run(cfg);
}

std::vector<RunResult> sweep(const RunConfig& cfg, std::string_view parameter, std::span<const double> values) {
  Experiment exp(cfg.data);
  return exp.sweep(cfg, parameter, values);
}

void export_projection(const LabeledRows& data, const std::filesystem::path& path) {
  const auto n = static_cast<std::size_t>(data.rows.rows());
  if (data.labels.size() != n || data.provenance.size() != n) {
    throw Error(ErrorCode::dimension_mismatch, "projection rows vs labels/provenance");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out << "label,provenance";
  for (Eigen::Index j = 0; j < data.rows.cols(); ++j) out << ",f" << j;
  out << '\n';
  out << std::setprecision(std::numeric_limits<float>::max_digits10);
  for (std::size_t r = 0; r < n; ++r) {
    out << data.labels[r] << ',' << data.provenance[r];
    for (Eigen::Index j = 0; j < data.rows.cols(); ++j) {
      out << ',' << static_cast<float>(data.rows(static_cast<Eigen::Index>(r), j));
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::io, "write failed for '" + path.string() + "'");
}

LabeledRows read_projection(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::unrecognized_format, "projection file has no header");
  Eigen::Index cols = 0;
  for (char ch : line) cols += ch == ',';
  cols -= 1;
  if (cols < 0 || line.rfind("label,provenance", 0) != 0) {
    throw Error(ErrorCode::unrecognized_format, "projection header");
  }

  LabeledRows out;
  std::vector<std::vector<double>> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string label, prov, cell;
    std::getline(ss, label, ',');
    std::getline(ss, prov, ',');
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stof(cell));
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw Error(ErrorCode::truncated_payload, "projection row has " + std::to_string(row.size()) + " values");
    }
    out.labels.push_back(label);
    out.provenance.push_back(prov);
    values.push_back(std::move(row));
  }
  out.rows.resize(static_cast<Eigen::Index>(values.size()), cols);
  for (std::size_t r = 0; r < values.size(); ++r) {
    for (Eigen::Index j = 0; j < cols; ++j) out.rows(static_cast<Eigen::Index>(r), j) = values[r][static_cast<std::size_t>(j)];
  }
  return out;
}

}  // namespace fshal
