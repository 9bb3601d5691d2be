#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifo/cli/manifest.hpp"
#include "ifo/dataset/io.hpp"
#include "ifo/envs/registry.hpp"
#include "ifo/error.hpp"
#include "ifo/experts/experts.hpp"
#include "ifo/training/abco.hpp"
#include "ifo/training/artifacts.hpp"
#include "ifo/training/rollout.hpp"

namespace ifo::cli {

namespace fs = std::filesystem;

inline void require_known_env(const std::string& env_id) {
  if (!envs::is_known_env(env_id)) throw ConfigError("unknown environment '" + env_id + "'");
}

inline fs::path manifest_path_for(const fs::path& file) { return fs::path(file.string() + ".manifest.json"); }

// ---------------------------------------------------------------------------
// collect

struct CollectRequest {
  std::string env_id;
  std::optional<std::size_t> pre;
  std::optional<std::size_t> expert;
  std::uint64_t seed = 0;
  fs::path out;
  // Keep the expert's actions (behavioural-cloning baseline, diagnostics).
  bool labelled = false;
  std::size_t experts_per_layout = 1;
};

/// Writes a pre-demonstration set or expert demonstrations, plus a manifest
/// next to the dataset.
inline Manifest cmd_collect(const CollectRequest& req, std::vector<std::string> argv = {}) {
  require_known_env(req.env_id);
  if (req.pre.has_value() == req.expert.has_value()) {
    throw ConfigError("collect needs exactly one of --pre N or --expert N");
  }
  Manifest m;
  m.command = "collect";
  m.argv = std::move(argv);
  m.seeds = {{"seed", req.seed}};
  Stopwatch clock;
  if (req.pre) {
    m.config = {{"env", req.env_id}, {"kind", "pre"}, {"count", *req.pre}};
    const auto set = experts::collect_pre_demos(req.env_id, *req.pre, req.seed);
    data::save_interactions(set, req.out);
  } else {
    m.config = {{"env", req.env_id},
                {"kind", "expert"},
                {"count", *req.expert},
                {"labelled", req.labelled},
                {"experts_per_layout", req.experts_per_layout}};
    experts::DemoOptions options;
    options.keep_actions = req.labelled;
    options.experts_per_layout = req.experts_per_layout;
    const auto demos = experts::collect_expert_demos(req.env_id, *req.expert, req.seed, options);
    data::save_demos(demos, req.env_id, req.out);
  }
  m.timings_seconds["collect"] = clock.seconds();
  m.add_output(req.out);
  m.status = "complete";
  m.save(manifest_path_for(req.out));
  return m;
}

// ---------------------------------------------------------------------------
// train

struct TrainRequest {
  training::RunConfig config;
  std::optional<fs::path> pre;
  std::optional<fs::path> demos;
  fs::path out;
};

inline fs::path checkpoint_path(const fs::path& run_dir, std::size_t iteration) {
  return run_dir / "checkpoints" / ("iteration_" + std::to_string(iteration) + ".json");
}

inline nlohmann::ordered_json summary_json(const training::IterationReport& r) {
  return {{"aer", r.aer}, {"performance", r.performance}, {"win_probability", r.win_probability}};
}

/// Runs ABCO(alpha) into `out`: per-iteration checkpoints, CSV and event log,
/// with the manifest rewritten after every iteration so that an interrupted
/// run still names its last completed iteration.
inline Manifest cmd_train(TrainRequest req, std::vector<std::string> argv = {}, std::ostream* progress = nullptr) {
  auto& config = req.config;
  config.validate();
  fs::create_directories(req.out);
  Manifest m;
  m.command = "train";
  m.argv = std::move(argv);
  const fs::path manifest_file = req.out / "manifest.json";
  Stopwatch total;

  Stopwatch clock;
  data::InteractionSet pre;
  if (req.pre) {
    pre = data::load_interactions(*req.pre);
    if (pre.env_id != config.env_id) {
      throw ValidationError("pre-demonstration file '" + req.pre->string() + "' is for '" + pre.env_id +
                            "' but --env is '" + config.env_id + "'");
    }
    config.n_pre = pre.size();
    m.inputs.push_back(req.pre->generic_string());
  } else {
    pre = experts::collect_pre_demos(config.env_id, config.n_pre, config.seed);
    const fs::path p = req.out / "pre.jsonl";
    data::save_interactions(pre, p);
    m.add_output(p);
  }
  std::vector<data::Trajectory> demos;
  if (req.demos) {
    auto file = data::load_demos(*req.demos);
    if (file.env_id != config.env_id) {
      throw ValidationError("demonstration file '" + req.demos->string() + "' is for '" + file.env_id +
                            "' but --env is '" + config.env_id + "'");
    }
    demos = std::move(file.demos);
    config.n_demos = demos.size();
    m.inputs.push_back(req.demos->generic_string());
  } else {
    experts::DemoOptions options;
    options.keep_actions = config.labels == training::LabelSource::GroundTruth;
    options.experts_per_layout = config.experts_per_layout;
    demos = experts::collect_expert_demos(config.env_id, config.n_demos, config.seed, options);
    const fs::path p = req.out / "demos.jsonl";
    data::save_demos(demos, config.env_id, p);
    m.add_output(p);
  }
  m.timings_seconds["data"] = clock.seconds();

  clock = Stopwatch();
  const auto baselines = training::compute_baselines(config.env_id, config.eval_episodes, config.seed);
  m.timings_seconds["baselines"] = clock.seconds();

  m.config = training::to_json(config);
  m.seeds = {{"seed", config.seed}};
  m.results = {{"expert_aer", baselines.expert_aer},
               {"random_aer", baselines.random_aer},
               {"iterations", nlohmann::ordered_json::array()}};
  m.save(manifest_file);

  const auto action_count = pre.action_count;
  training::AbcoSession session(config, std::move(pre), std::move(demos), baselines);
  training::EventLog events(req.out / "events.jsonl");
  m.add_output(req.out / "events.jsonl");
  events.write({{"event", "start"}, {"config", training::to_json(config)},
                {"expert_aer", baselines.expert_aer}, {"random_aer", baselines.random_aer}});

  const fs::path csv = req.out / "iterations.csv";
  std::string csv_text = training::reports_csv_header(action_count);
  clock = Stopwatch();
  session.run([&](const training::AbcoSession& s, const training::IterationReport& r) {
    const fs::path ckpt = checkpoint_path(req.out, r.iteration);
    training::save_checkpoint(training::session_checkpoint(s), ckpt);
    csv_text += training::reports_csv_row(r);
    training::write_file_atomically(csv, csv_text);
    auto event = training::to_json(r);
    event["event"] = "iteration";
    events.write(event);

    m.add_output(ckpt);
    m.add_output(csv);
    m.results["iterations"].push_back(training::to_json(r));
    m.results["final"] = summary_json(r);
    m.last_completed_iteration = r.iteration;
    m.timings_seconds["iterations"] = clock.seconds();
    m.save(manifest_file);
    if (progress) {
      *progress << "iteration " << r.iteration << " aer=" << training::format_real(r.aer)
                << " performance=" << training::format_real(r.performance)
                << " win=" << training::format_real(r.win_probability)
                << " idm_accuracy=" << training::format_real(r.idm_validation_accuracy) << std::endl;
    }
  });
  events.write({{"event", "complete"}, {"iterations", session.reports().size()}});

  m.status = "complete";
  m.timings_seconds["total"] = total.seconds();
  m.save(manifest_file);
  return m;
}

// ---------------------------------------------------------------------------
// sentinel checkpoints and eval

inline void cmd_sentinel(training::CheckpointKind kind, const std::string& env_id, const fs::path& out) {
  require_known_env(env_id);
  if (kind == training::CheckpointKind::Policy) throw ConfigError("sentinel kind must be expert or random");
  training::save_checkpoint(training::sentinel_checkpoint(kind, env_id, {}), out);
}

struct EvalRequest {
  fs::path checkpoint;
  std::size_t episodes = training::kEvaluationEpisodes;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
};

struct EvalResult {
  double aer = 0.0;
  double performance = 0.0;
  training::Baselines baselines;
  std::uint64_t seed = 0;
  fs::path json_path;

  std::string line() const {
    return "aer=" + training::format_real(aer) + " performance=" + training::format_real(performance);
  }
};

/// AER of the checkpoint's actor, and its Performance against the expert and
/// random actors evaluated on the same episodes.
inline EvalResult cmd_eval(const EvalRequest& req) {
  if (req.episodes == 0) throw ConfigError("--episodes must be positive");
  const auto ckpt = training::load_checkpoint(req.checkpoint);
  require_known_env(ckpt.env_id);
  EvalResult r;
  r.seed = req.seed.value_or(ckpt.config ? ckpt.config->seed : 0);
  r.aer = training::evaluate_aer(ckpt.env_id, ckpt.actor(), req.episodes, r.seed);
  r.baselines = training::compute_baselines(ckpt.env_id, req.episodes, r.seed);
  r.performance = r.baselines.performance_of(r.aer);
  r.json_path = req.out.value_or(fs::path(req.checkpoint.string() + ".eval.json"));
  nlohmann::ordered_json j = {{"checkpoint", req.checkpoint.generic_string()},
                              {"kind", training::to_string(ckpt.kind)},
                              {"env_id", ckpt.env_id},
                              {"episodes", req.episodes},
                              {"seed", r.seed},
                              {"aer", r.aer},
                              {"performance", r.performance},
                              {"expert_aer", r.baselines.expert_aer},
                              {"random_aer", r.baselines.random_aer},
                              {"code_hash", kCodeHash}};
  training::write_file_atomically(r.json_path, j.dump(2) + "\n");
  return r;
}

// ---------------------------------------------------------------------------
// table

/// One row of a results table: which training variant produced it.
struct Method {
  std::string name;
  std::string slug;
  training::SamplingMode sampling = training::SamplingMode::None;
  bool attention = false;
  training::LabelSource labels = training::LabelSource::Idm;
  std::optional<std::size_t> alpha;
};

inline std::vector<Method> main_suite_methods() {
  using training::LabelSource;
  using training::SamplingMode;
  return {{"BC", "bc", SamplingMode::None, false, LabelSource::GroundTruth, 0},
          {"BCO", "bco", SamplingMode::None, false, LabelSource::Idm, std::nullopt},
          {"ABCO", "abco", SamplingMode::Partial, true, LabelSource::Idm, std::nullopt}};
}

inline std::vector<Method> ablation_suite_methods() {
  using training::LabelSource;
  using training::SamplingMode;
  return {{"BCO", "bco", SamplingMode::None, false, LabelSource::Idm, std::nullopt},
          {"Attention", "attention", SamplingMode::None, true, LabelSource::Idm, std::nullopt},
          {"Partial Sampling", "partial", SamplingMode::Partial, false, LabelSource::Idm, std::nullopt},
          {"Whole Sampling", "whole", SamplingMode::Whole, false, LabelSource::Idm, std::nullopt},
          {"ABCO-partial", "abco", SamplingMode::Partial, true, LabelSource::Idm, std::nullopt},
          {"ABCO-whole", "abco-whole", SamplingMode::Whole, true, LabelSource::Idm, std::nullopt}};
}

inline std::string run_id(const Method& method, const std::string& env_id, std::uint64_t seed) {
  return method.slug + "-" + env_id + "-s" + std::to_string(seed);
}

inline training::RunConfig method_config(const Method& method, const std::string& env_id, std::uint64_t seed) {
  auto c = training::default_config(env_id);
  c.seed = seed;
  c.sampling = method.sampling;
  c.attention = method.attention;
  c.labels = method.labels;
  if (method.alpha) c.alpha = *method.alpha;
  return c;
}

/// Thrown by `table` when runs it needs have not completed.
class MissingRunsError : public ValidationError {
 public:
  explicit MissingRunsError(std::vector<std::string> ids)
      : ValidationError(describe(ids)), ids_(std::move(ids)) {}
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  static std::string describe(const std::vector<std::string>& ids) {
    std::string s = "missing runs:";
    for (const auto& id : ids) s += " " + id;
    return s;
  }
  std::vector<std::string> ids_;
};

struct TableRequest {
  std::string suite = "main";
  fs::path runs = "runs";
  std::vector<std::uint64_t> seeds{0};
  std::string ablation_env = "maze5";
  fs::path out;
  bool run_missing = false;
};

struct RunSummary {
  double aer = 0.0;
  double performance = 0.0;
  double win_probability = 0.0;
  nlohmann::json iterations;
};

inline std::optional<RunSummary> read_completed_run(const fs::path& dir) {
  const fs::path file = dir / "manifest.json";
  if (!fs::exists(file)) return std::nullopt;
  const auto j = load_manifest(file);
  if (j.value("status", "") != "complete") return std::nullopt;
  try {
    const auto& final = j.at("results").at("final");
    return RunSummary{final.at("aer").get<double>(), final.at("performance").get<double>(),
                      final.at("win_probability").get<double>(), j.at("results").at("iterations")};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest '" + file.string() + "' lacks results: " + e.what());
  }
}

struct TableResult {
  std::vector<fs::path> files;
  std::vector<std::string> trained;
};

/// Aggregates completed runs into a CSV. Each cell is the mean over seeds of
/// the last iteration. Missing runs are trained when `run_missing` is set,
/// otherwise they are reported all at once.
inline TableResult cmd_table(const TableRequest& req, std::ostream* progress = nullptr) {
  if (req.suite != "main" && req.suite != "ablation") {
    throw ConfigError("unknown suite '" + req.suite + "' (expected main or ablation)");
  }
  if (req.seeds.empty()) throw ConfigError("at least one seed is required");
  require_known_env(req.ablation_env);
  const bool main = req.suite == "main";
  const auto methods = main ? main_suite_methods() : ablation_suite_methods();
  std::vector<std::string> envs;
  if (main) {
    for (auto e : envs::kEnvironmentIds) envs.emplace_back(e);
  } else {
    envs.push_back(req.ablation_env);
  }

  TableResult result;
  std::vector<std::string> missing;
  for (const auto& method : methods) {
    for (const auto& env : envs) {
      for (auto seed : req.seeds) {
        const auto id = run_id(method, env, seed);
        if (read_completed_run(req.runs / id)) continue;
        if (!req.run_missing) {
          missing.push_back(id);
          continue;
        }
        if (progress) *progress << "training " << id << std::endl;
        cmd_train({method_config(method, env, seed), std::nullopt, std::nullopt, req.runs / id},
                  {"table", "--run-missing"}, progress);
        result.trained.push_back(id);
      }
    }
  }
  if (!missing.empty()) throw MissingRunsError(missing);

  auto mean_of = [&](const Method& method, const std::string& env) {
    RunSummary mean;
    for (auto seed : req.seeds) {
      const auto s = *read_completed_run(req.runs / run_id(method, env, seed));
      mean.aer += s.aer;
      mean.performance += s.performance;
      mean.win_probability += s.win_probability;
    }
    const double n = static_cast<double>(req.seeds.size());
    mean.aer /= n;
    mean.performance /= n;
    mean.win_probability /= n;
    return mean;
  };

  using training::format_real;
  std::string csv;
  if (main) {
    csv = "method,metric";
    for (const auto& e : envs) csv += "," + e;
    csv += "\n";
    for (const auto& method : methods) {
      std::string p = method.name + ",performance", a = method.name + ",aer";
      for (const auto& e : envs) {
        const auto s = mean_of(method, e);
        p += "," + format_real(s.performance);
        a += "," + format_real(s.aer);
      }
      csv += p + "\n" + a + "\n";
    }
  } else {
    csv = "method,env,performance,aer,win_probability\n";
    for (const auto& method : methods) {
      const auto s = mean_of(method, req.ablation_env);
      csv += method.name + "," + req.ablation_env + "," + format_real(s.performance) + "," + format_real(s.aer) +
             "," + format_real(s.win_probability) + "\n";
    }
  }
  training::write_file_atomically(req.out, csv);
  result.files.push_back(req.out);

  // Per-iteration label histograms, the data behind the action-vanishing plot.
  // Environments with fewer actions leave the trailing columns empty.
  std::size_t actions = 0;
  for (const auto& env : envs) actions = std::max(actions, envs::make_env(env)->action_count());
  std::string dist = "run_id,method,env,seed,iteration,idm_validation_accuracy,performance";
  for (std::size_t a = 0; a < actions; ++a) dist += ",predicted_action_" + std::to_string(a);
  dist += "\n";
  for (const auto& method : methods) {
    for (const auto& env : envs) {
      for (auto seed : req.seeds) {
        const auto id = run_id(method, env, seed);
        const auto s = *read_completed_run(req.runs / id);
        for (const auto& it : s.iterations) {
          dist += id + "," + method.name + "," + env + "," + std::to_string(seed) + "," +
                  std::to_string(it.at("iteration").get<std::size_t>()) + "," +
                  format_real(it.at("idm_validation_accuracy").get<double>()) + "," +
                  format_real(it.at("performance").get<double>());
          const auto h = it.at("action_prediction_histogram").get<std::vector<double>>();
          for (std::size_t a = 0; a < actions; ++a) dist += "," + (a < h.size() ? format_real(h[a]) : "");
          dist += "\n";
        }
      }
    }
  }
  fs::path dist_path = req.out;
  dist_path.replace_extension();
  dist_path += "_iterations.csv";
  training::write_file_atomically(dist_path, dist);
  result.files.push_back(dist_path);
  return result;
}

}  // namespace ifo::cli
