#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ifo/cli/commands.hpp"
#include "ifo/error.hpp"

namespace ifo::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kValidation = 3, kIo = 4 };

namespace detail {

inline bool on_off(const std::string& s) { return s == "on"; }

// Train settings that only override the per-environment defaults when given.
struct TrainFlags {
  std::string env;
  std::optional<std::size_t> alpha, n_pre, n_demos, experts_per_layout, rollouts, eval_episodes, idm_epochs,
      policy_epochs, batch_size, hidden, attention_channels;
  std::optional<std::string> attention, sampling, labels, normalize;
  std::optional<std::uint64_t> seed;
  std::optional<double> learning_rate;
  std::optional<std::string> pre, demos;
  std::string out;

  training::RunConfig config() const {
    auto c = training::default_config(env);
    auto set = [](auto& field, const auto& flag) {
      if (flag) field = *flag;
    };
    set(c.alpha, alpha);
    set(c.n_pre, n_pre);
    set(c.n_demos, n_demos);
    set(c.experts_per_layout, experts_per_layout);
    set(c.rollouts, rollouts);
    set(c.eval_episodes, eval_episodes);
    set(c.idm_epochs, idm_epochs);
    set(c.policy_epochs, policy_epochs);
    set(c.batch_size, batch_size);
    set(c.hidden, hidden);
    set(c.attention_channels, attention_channels);
    set(c.seed, seed);
    set(c.learning_rate, learning_rate);
    if (attention) c.attention = on_off(*attention);
    if (normalize) c.normalize_inputs = on_off(*normalize);
    if (sampling) c.sampling = training::sampling_mode_from_string(*sampling);
    if (labels) c.labels = training::label_source_from_string(*labels);
    return c;
  }
};

inline std::vector<std::string> envs_list() {
  std::vector<std::string> v;
  for (auto e : envs::kEnvironmentIds) v.emplace_back(e);
  return v;
}

}  // namespace detail

/// Parses and runs one command. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Behavioural cloning from observation experiments"};
  app.name("ifo_lab");
  app.set_config("--config", "", "TOML-style file with one [command] section of flag = value lines");
  app.allow_config_extras(false);
  app.require_subcommand(1);
  const auto known_envs = detail::envs_list();

  CollectRequest collect;
  std::string collect_out;
  auto* c = app.add_subcommand("collect", "Record pre-demonstrations or expert demonstrations");
  c->add_option("env", collect.env_id, "Environment id")->required()->check(CLI::IsMember(known_envs));
  auto* pre_opt = c->add_option("--pre", collect.pre, "Random-policy interactions to record");
  auto* exp_opt = c->add_option("--expert", collect.expert, "Successful expert episodes to record");
  pre_opt->excludes(exp_opt);
  c->add_option("--seed", collect.seed, "Master seed");
  c->add_option("--out", collect_out, "Output JSONL file")->required();
  c->add_flag("--labelled", collect.labelled, "Keep expert actions");
  c->add_option("--experts-per-layout", collect.experts_per_layout, "Expert episodes per maze layout");

  detail::TrainFlags tf;
  auto* t = app.add_subcommand("train", "Run ABCO(alpha) or one of its baselines");
  t->add_option("--env", tf.env, "Environment id")->required()->check(CLI::IsMember(known_envs));
  t->add_option("--alpha", tf.alpha, "Post-demonstration rounds");
  t->add_option("--attention", tf.attention, "Self-attention layers")->check(CLI::IsMember({"on", "off"}));
  t->add_option("--sampling", tf.sampling, "IDM training set rule")
      ->check(CLI::IsMember({"none", "partial", "whole"}));
  t->add_option("--labels", tf.labels, "Policy label source")->check(CLI::IsMember({"idm", "ground_truth"}));
  t->add_option("--seed", tf.seed, "Master seed");
  t->add_option("--pre", tf.pre, "Pre-demonstration JSONL (collected when absent)");
  t->add_option("--demos", tf.demos, "Expert demonstration JSONL (collected when absent)");
  t->add_option("--out", tf.out, "Run directory")->required();
  t->add_option("--n-pre", tf.n_pre, "Pre-demonstrations to collect");
  t->add_option("--n-demos", tf.n_demos, "Expert demonstrations to collect");
  t->add_option("--experts-per-layout", tf.experts_per_layout, "Expert episodes per maze layout");
  t->add_option("--rollouts", tf.rollouts, "Policy rollouts per iteration");
  t->add_option("--eval-episodes", tf.eval_episodes, "Evaluation episodes per iteration");
  t->add_option("--idm-epochs", tf.idm_epochs, "IDM epochs per iteration");
  t->add_option("--policy-epochs", tf.policy_epochs, "Policy epochs per iteration");
  t->add_option("--batch-size", tf.batch_size, "Minibatch size");
  t->add_option("--learning-rate", tf.learning_rate, "Adam learning rate");
  t->add_option("--hidden", tf.hidden, "Hidden width");
  t->add_option("--attention-channels", tf.attention_channels, "Channels per attention position");
  t->add_option("--normalize", tf.normalize, "Standardise inputs")->check(CLI::IsMember({"on", "off"}));

  EvalRequest eval;
  std::string eval_checkpoint;
  std::optional<std::string> eval_out;
  auto* e = app.add_subcommand("eval", "Average episode reward and Performance of a checkpoint");
  e->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")->required();
  e->add_option("--episodes", eval.episodes, "Evaluation episodes");
  e->add_option("--seed", eval.seed, "Evaluation seed (defaults to the run seed)");
  e->add_option("--out", eval_out, "JSON result file");

  std::string sentinel_kind, sentinel_env, sentinel_out;
  auto* s = app.add_subcommand("sentinel", "Write a checkpoint that acts as the expert or the random policy");
  s->add_option("kind", sentinel_kind, "expert or random")->required()->check(CLI::IsMember({"expert", "random"}));
  s->add_option("env", sentinel_env, "Environment id")->required()->check(CLI::IsMember(known_envs));
  s->add_option("--out", sentinel_out, "Checkpoint file")->required();

  TableRequest table;
  std::string table_runs = "runs", table_out;
  auto* tb = app.add_subcommand("table", "Aggregate completed runs into a results table");
  tb->add_option("--suite", table.suite, "main or ablation")->check(CLI::IsMember({"main", "ablation"}));
  tb->add_option("--runs", table_runs, "Directory holding run directories");
  tb->add_option("--seeds", table.seeds, "Seeds to average")->delimiter(',');
  tb->add_option("--env", table.ablation_env, "Environment of the ablation suite")
      ->check(CLI::IsMember(known_envs));
  tb->add_option("--out", table_out, "Output CSV")->required();
  tb->add_flag("--run-missing", table.run_missing, "Train runs that are not complete");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kUsage;
  }

  std::vector<std::string> args(argv, argv + argc);
  try {
    if (*c) {
      collect.out = collect_out;
      cmd_collect(collect, args);
      out << "wrote " << collect.out.generic_string() << "\n";
    } else if (*t) {
      TrainRequest req{tf.config(), std::nullopt, std::nullopt, tf.out};
      if (tf.pre) req.pre = *tf.pre;
      if (tf.demos) req.demos = *tf.demos;
      const auto m = cmd_train(req, args, &out);
      out << "run complete: " << (req.out / "manifest.json").generic_string() << "\n";
      (void)m;
    } else if (*e) {
      eval.checkpoint = eval_checkpoint;
      if (eval_out) eval.out = *eval_out;
      out << cmd_eval(eval).line() << "\n";
    } else if (*s) {
      cmd_sentinel(training::checkpoint_kind_from_string(sentinel_kind), sentinel_env, sentinel_out);
      out << "wrote " << sentinel_out << "\n";
    } else if (*tb) {
      table.runs = table_runs;
      table.out = table_out;
      for (const auto& f : cmd_table(table, &out).files) out << "wrote " << f.generic_string() << "\n";
    }
    return kOk;
  } catch (const ConfigError& ex) {
    err << "usage error: " << ex.what() << "\n";
    return kUsage;
  } catch (const IoError& ex) {
    err << "i/o error: " << ex.what() << "\n";
    return kIo;
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "i/o error: " << ex.what() << "\n";
    return kIo;
  } catch (const ValidationError& ex) {
    err << "validation error: " << ex.what() << "\n";
    return kValidation;
  } catch (const ParseError& ex) {
    err << "validation error: " << ex.what() << "\n";
    return kValidation;
  } catch (const IntegrityError& ex) {
    err << "integrity error: " << ex.what() << "\n";
    return kValidation;
  } catch (const DimensionError& ex) {
    err << "validation error: " << ex.what() << "\n";
    return kValidation;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kFailure;
  }
}

}  // namespace ifo::cli
