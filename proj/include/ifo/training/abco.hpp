#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ifo/dataset/interaction.hpp"
#include "ifo/dataset/io.hpp"
#include "ifo/dataset/sampling.hpp"
#include "ifo/envs/registry.hpp"
#include "ifo/error.hpp"
#include "ifo/nn/network.hpp"
#include "ifo/random.hpp"
#include "ifo/training/learner.hpp"
#include "ifo/training/rollout.hpp"

namespace ifo::training {

// How the IDM training set is rebuilt after each round of policy rollouts.
//   none:    the latest post-demonstrations only (iterated BCO)
//   partial: win-weighted mix of successful post-demonstrations and pre-demonstrations
//   whole:   every post-demonstration plus the pre-demonstration share of the mix
enum class SamplingMode { None, Partial, Whole };

// Where the policy's action labels come from. ground_truth reads the expert's
// own actions and turns the loop into plain behavioural cloning.
enum class LabelSource { Idm, GroundTruth };

inline std::string_view to_string(SamplingMode m) {
  switch (m) {
    case SamplingMode::None: return "none";
    case SamplingMode::Partial: return "partial";
    case SamplingMode::Whole: return "whole";
  }
  return "none";
}

inline SamplingMode sampling_mode_from_string(std::string_view s) {
  if (s == "none") return SamplingMode::None;
  if (s == "partial") return SamplingMode::Partial;
  if (s == "whole") return SamplingMode::Whole;
  throw ConfigError("unknown sampling mode '" + std::string(s) + "' (expected none, partial or whole)");
}

inline std::string_view to_string(LabelSource l) { return l == LabelSource::Idm ? "idm" : "ground_truth"; }

inline LabelSource label_source_from_string(std::string_view s) {
  if (s == "idm") return LabelSource::Idm;
  if (s == "ground_truth") return LabelSource::GroundTruth;
  throw ConfigError("unknown label source '" + std::string(s) + "' (expected idm or ground_truth)");
}

struct RunConfig {
  std::string env_id = "cartpole";
  std::size_t alpha = 5;
  bool attention = true;
  SamplingMode sampling = SamplingMode::Partial;
  LabelSource labels = LabelSource::Idm;
  std::uint64_t seed = 0;
  std::size_t n_pre = 10000;
  std::size_t n_demos = 100;
  std::size_t experts_per_layout = 1;
  // Policy rollouts per iteration, |E|.
  std::size_t rollouts = 100;
  std::size_t eval_episodes = kEvaluationEpisodes;
  std::size_t idm_epochs = 20;
  std::size_t policy_epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::size_t hidden = 12;
  std::size_t attention_channels = 1;
  bool normalize_inputs = true;

  bool operator==(const RunConfig&) const = default;

  // Throws ConfigError on values no run can use.
  void validate() const {
    if (!envs::is_known_env(env_id)) throw ConfigError("unknown environment '" + env_id + "'");
    validate_values();
  }

  // The numeric checks of validate(), for sessions on custom environments.
  void validate_values() const {
    if (n_pre == 0) throw ConfigError("n_pre must be positive");
    if (n_demos == 0) throw ConfigError("n_demos must be positive");
    if (rollouts == 0) throw ConfigError("rollouts must be positive");
    if (eval_episodes == 0) throw ConfigError("eval_episodes must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (hidden == 0) throw ConfigError("hidden must be positive");
    if (attention && (attention_channels == 0 || hidden % attention_channels != 0)) {
      throw ConfigError("hidden width must be a multiple of attention_channels");
    }
  }

  nn::NetOptions net_options() const {
    nn::NetOptions o;
    o.hidden = hidden;
    o.attention = attention;
    o.attention_channels = attention_channels;
    return o;
  }
};

/// Per-environment defaults. Maze policies see a spatial encoding and need a
/// wider network and many more demonstration mazes than the vector tasks.
inline RunConfig default_config(const std::string& env_id) {
  RunConfig c;
  c.env_id = env_id;
  if (env_id == "acrobot") c.n_pre = 50000;
  if (envs::is_maze(env_id)) {
    c.n_pre = 30000;
    c.normalize_inputs = false;
    if (env_id == "maze3") {
      c.hidden = 32;
      c.n_demos = 1000;
    } else {
      c.hidden = 64;
      c.attention_channels = 4;
      c.n_demos = 6000;
      c.policy_epochs = 10;
      c.idm_epochs = 10;
    }
  }
  return c;
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  return {{"env", c.env_id},
          {"alpha", c.alpha},
          {"attention", c.attention},
          {"sampling", to_string(c.sampling)},
          {"labels", to_string(c.labels)},
          {"seed", c.seed},
          {"n_pre", c.n_pre},
          {"n_demos", c.n_demos},
          {"experts_per_layout", c.experts_per_layout},
          {"rollouts", c.rollouts},
          {"eval_episodes", c.eval_episodes},
          {"idm_epochs", c.idm_epochs},
          {"policy_epochs", c.policy_epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"hidden", c.hidden},
          {"attention_channels", c.attention_channels},
          {"normalize_inputs", c.normalize_inputs}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c = default_config(j.at("env").get<std::string>());
  c.alpha = j.at("alpha").get<std::size_t>();
  c.attention = j.at("attention").get<bool>();
  c.sampling = sampling_mode_from_string(j.at("sampling").get<std::string>());
  c.labels = label_source_from_string(j.at("labels").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.n_pre = j.at("n_pre").get<std::size_t>();
  c.n_demos = j.at("n_demos").get<std::size_t>();
  c.experts_per_layout = j.at("experts_per_layout").get<std::size_t>();
  c.rollouts = j.at("rollouts").get<std::size_t>();
  c.eval_episodes = j.at("eval_episodes").get<std::size_t>();
  c.idm_epochs = j.at("idm_epochs").get<std::size_t>();
  c.policy_epochs = j.at("policy_epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.attention_channels = j.at("attention_channels").get<std::size_t>();
  c.normalize_inputs = j.at("normalize_inputs").get<bool>();
  return c;
}

struct IterationReport {
  std::size_t iteration = 0;
  double idm_validation_accuracy = 0.0;
  double win_probability = 0.0;
  double aer = 0.0;
  double performance = 0.0;
  // Frequency of each action among the labels given to the expert transitions.
  std::vector<double> action_prediction_histogram;
  std::size_t training_set_size = 0;
  std::size_t post_demo_size = 0;
  // The IDM training set held a single action class.
  bool degenerate = false;

  bool operator==(const IterationReport&) const = default;
};

inline nlohmann::ordered_json to_json(const IterationReport& r) {
  return {{"iteration", r.iteration},
          {"idm_validation_accuracy", r.idm_validation_accuracy},
          {"win_probability", r.win_probability},
          {"aer", r.aer},
          {"performance", r.performance},
          {"action_prediction_histogram", r.action_prediction_histogram},
          {"training_set_size", r.training_set_size},
          {"post_demo_size", r.post_demo_size},
          {"degenerate", r.degenerate}};
}

inline IterationReport iteration_report_from_json(const nlohmann::json& j) {
  IterationReport r;
  r.iteration = j.at("iteration").get<std::size_t>();
  r.idm_validation_accuracy = j.at("idm_validation_accuracy").get<double>();
  r.win_probability = j.at("win_probability").get<double>();
  r.aer = j.at("aer").get<double>();
  r.performance = j.at("performance").get<double>();
  r.action_prediction_histogram = j.at("action_prediction_histogram").get<std::vector<double>>();
  r.training_set_size = j.at("training_set_size").get<std::size_t>();
  r.post_demo_size = j.at("post_demo_size").get<std::size_t>();
  r.degenerate = j.at("degenerate").get<bool>();
  return r;
}

struct IdmFit {
  double validation_accuracy = 0.0;
  double training_accuracy = 0.0;
  bool degenerate = false;
};

/// Maximum-likelihood fit of P(a | s_t, s_{t+1}). Runs are split 90/10 into
/// training and validation by run id; with a single run the training rows
/// double as validation rows.
inline IdmFit train_idm(Learner& idm, const data::InteractionSet& set, const FitOptions& options, Rng& rng) {
  if (set.empty()) throw ContractError("train_idm needs a non-empty interaction set");
  std::set<std::int64_t> ids;
  std::set<int> actions;
  for (const auto& it : set.interactions) {
    ids.insert(it.run_id);
    actions.insert(it.action);
  }
  std::vector<std::int64_t> order(ids.begin(), ids.end());
  rng.shuffle(std::span(order));
  const std::size_t held = order.size() >= 2 ? std::max<std::size_t>(1, order.size() / 10) : 0;
  const std::set<std::int64_t> validation_ids(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));

  LabelledRows train, validation;
  for (const auto& it : set.interactions) {
    auto& target = validation_ids.count(it.run_id) ? validation : train;
    target.push(transition_row(it.state, it.next_state), it.action);
  }
  idm.fit(train, options, rng);
  IdmFit fit;
  fit.training_accuracy = accuracy(idm.net(), train);
  fit.validation_accuracy = validation.empty() ? fit.training_accuracy : accuracy(idm.net(), validation);
  fit.degenerate = actions.size() < 2;
  return fit;
}

/// Consecutive state pairs of state-only demonstrations, in demonstration order.
inline LabelledRows expert_transitions(const std::vector<data::Trajectory>& demos) {
  LabelledRows rows;
  for (const auto& t : demos) {
    for (std::size_t i = 0; i + 1 < t.states.size(); ++i) {
      rows.push(transition_row(t.states[i], t.states[i + 1]), 0);
    }
  }
  return rows;
}

/// IDM's greedy label for every expert transition; ties go to the lowest action id.
inline std::vector<int> predict_expert_actions(const nn::Network& idm, const LabelledRows& transitions) {
  return batch_predict(idm, transitions.rows, transitions.width);
}

/// Pairs (s_t, label_t) for the policy, labels aligned with expert_transitions order.
inline LabelledRows policy_pairs(const std::vector<data::Trajectory>& demos, std::span<const int> labels) {
  LabelledRows rows;
  std::size_t k = 0;
  for (const auto& t : demos) {
    for (std::size_t i = 0; i + 1 < t.states.size(); ++i) {
      if (k >= labels.size()) throw DimensionError("fewer labels than expert transitions");
      rows.push(t.states[i], labels[k++]);
    }
  }
  if (k != labels.size()) throw DimensionError("more labels than expert transitions");
  return rows;
}

/// Behavioural cloning of pi(a | s) on labelled expert states.
inline double train_policy(Learner& policy, const LabelledRows& pairs, const FitOptions& options, Rng& rng) {
  return policy.fit(pairs, options, rng);
}

inline std::vector<double> label_histogram(std::span<const int> labels, std::size_t action_count) {
  std::vector<double> h(action_count, 0.0);
  if (labels.empty()) return h;
  for (int a : labels) h.at(static_cast<std::size_t>(a)) += 1.0;
  for (double& v : h) v /= static_cast<double>(labels.size());
  return h;
}

/// Per-column mean and standard deviation (1 where a column is constant).
inline std::pair<std::vector<double>, std::vector<double>> column_moments(const LabelledRows& rows) {
  const std::size_t w = rows.width;
  std::vector<double> mean(w, 0.0), scale(w, 0.0);
  const double n = static_cast<double>(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < w; ++c) mean[c] += rows.rows[i * w + c];
  }
  for (double& m : mean) m /= n;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < w; ++c) {
      const double d = rows.rows[i * w + c] - mean[c];
      scale[c] += d * d;
    }
  }
  for (double& s : scale) {
    s = std::sqrt(s / n);
    if (!(s > 1e-12)) s = 1.0;
  }
  return {mean, scale};
}

/// Run id of post-demonstration e collected after iteration i. Distinct from
/// every pre-demonstration run id.
inline std::int64_t post_run_id(std::size_t iteration, std::size_t episode) {
  return static_cast<std::int64_t>(((iteration + 1) << 32) | episode);
}

/// One ABCO(alpha) run: alpha + 1 rounds of IDM fit, expert labelling, policy
/// fit, rollouts and resampling, driven one iteration at a time.
class AbcoSession {
 public:
  AbcoSession(RunConfig config, data::InteractionSet pre, std::vector<data::Trajectory> demos, Baselines baselines)
      : AbcoSession(std::move(config), std::move(pre), std::move(demos), baselines, nullptr) {}

  /// Session on `environment` instead of the registered environment named by
  /// the config; its id must equal config.env_id.
  AbcoSession(RunConfig config, data::InteractionSet pre, std::vector<data::Trajectory> demos, Baselines baselines,
              std::shared_ptr<const envs::Environment> environment)
      : config_(checked(std::move(config), environment)), pre_(std::move(pre)), demos_(std::move(demos)),
        baselines_(baselines),
        env_(environment ? std::move(environment) : std::shared_ptr<const envs::Environment>(envs::make_env(config_.env_id))),
        idm_(make_learner(nn::Role::Idm, 0)), policy_(make_learner(nn::Role::Policy, 1)) {
    if (pre_.env_id != config_.env_id) {
      throw ValidationError("pre-demonstrations are for '" + pre_.env_id + "' but the run is for '" +
                            config_.env_id + "'");
    }
    if (pre_.empty()) throw ValidationError("pre-demonstration set is empty");
    pre_.validate();
    if (demos_.empty()) throw ValidationError("no expert demonstrations");
    for (const auto& t : demos_) {
      if (t.env_id != config_.env_id) {
        throw ValidationError("demonstrations are for '" + t.env_id + "' but the run is for '" + config_.env_id + "'");
      }
      if (config_.labels == LabelSource::GroundTruth && !t.actions) {
        throw ValidationError("ground_truth labels need demonstrations recorded with actions");
      }
    }
    transitions_ = expert_transitions(demos_);
    if (transitions_.empty()) throw ValidationError("demonstrations contain no transitions");
    if (transitions_.width != idm_.net().input_dim()) {
      throw ValidationError("demonstration states have width " + std::to_string(transitions_.width / 2) +
                            " but '" + config_.env_id + "' states have width " +
                            std::to_string(idm_.net().input_dim() / 2));
    }
    if (config_.normalize_inputs) install_normalization();
    training_set_ = pre_;
  }

  const RunConfig& config() const { return config_; }
  const Baselines& baselines() const { return baselines_; }
  const Learner& idm() const { return idm_; }
  const Learner& policy() const { return policy_; }
  const data::InteractionSet& training_set() const { return training_set_; }
  const data::InteractionSet& latest_post_demos() const { return latest_pos_; }
  const std::vector<IterationReport>& reports() const { return reports_; }
  std::size_t idm_fits() const { return idm_fits_; }
  std::size_t policy_fits() const { return policy_fits_; }
  std::size_t next_iteration() const { return reports_.size(); }
  bool finished() const { return reports_.size() > config_.alpha; }

  /// Runs the next iteration and returns its report.
  const IterationReport& step() {
    if (finished()) throw ContractError("all " + std::to_string(config_.alpha + 1) + " iterations already ran");
    const std::size_t it = next_iteration();
    IterationReport report;
    report.iteration = it;
    report.training_set_size = training_set_.size();

    std::vector<int> labels;
    if (config_.labels == LabelSource::Idm) {
      Rng rng(derive_seed(config_.seed, stream::kTraining, 2 * it));
      const IdmFit fit = train_idm(idm_, training_set_, {config_.idm_epochs, config_.batch_size}, rng);
      ++idm_fits_;
      report.idm_validation_accuracy = fit.validation_accuracy;
      report.degenerate = fit.degenerate;
      labels = predict_expert_actions(idm_.net(), transitions_);
    } else {
      for (const auto& t : demos_) labels.insert(labels.end(), t.actions->begin(), t.actions->end());
      report.idm_validation_accuracy = 1.0;
    }
    report.action_prediction_histogram = label_histogram(labels, pre_.action_count);

    Rng policy_rng(derive_seed(config_.seed, stream::kTraining, 2 * it + 1));
    train_policy(policy_, policy_pairs(demos_, labels), {config_.policy_epochs, config_.batch_size}, policy_rng);
    ++policy_fits_;

    const Actor actor = greedy_actor(policy_.net());
    RolloutResult rollout = run_policy_episodes(*env_, actor, config_.rollouts,
                                                {config_.seed, stream::kRollouts, it}, post_run_id(it, 0));
    report.win_probability = rollout.win_probability;
    report.post_demo_size = rollout.pos.size();
    report.aer = evaluate_episodes(*env_, actor, config_.eval_episodes, config_.seed).aer;
    report.performance = baselines_.performance_of(report.aer);
    latest_pos_ = std::move(rollout.pos);

    if (it < config_.alpha) resample(it);
    reports_.push_back(std::move(report));
    return reports_.back();
  }

  /// Runs the remaining iterations, calling `on_iteration` after each one.
  const std::vector<IterationReport>& run(
      const std::function<void(const AbcoSession&, const IterationReport&)>& on_iteration = {}) {
    while (!finished()) {
      const IterationReport& r = step();
      if (on_iteration) on_iteration(*this, r);
    }
    return reports_;
  }

 private:
  static RunConfig checked(RunConfig config, const std::shared_ptr<const envs::Environment>& environment) {
    if (!environment) {
      config.validate();
    } else {
      config.validate_values();
      if (environment->id() != config.env_id) {
        throw ValidationError("session environment is '" + environment->id() + "' but the run is for '" +
                              config.env_id + "'");
      }
    }
    return config;
  }

  Learner make_learner(nn::Role role, std::uint64_t index) const {
    Rng rng(derive_seed(config_.seed, stream::kInit, index));
    const auto spec = nn::build_vector_net(role, env_->state_dim(), env_->action_count(), config_.net_options());
    return Learner(nn::Network::build(spec, rng), ad::AdamOptions{config_.learning_rate});
  }

  // Standardises network inputs with moments of the pre-demonstrations.
  void install_normalization() {
    LabelledRows transitions, states;
    for (const auto& it : pre_.interactions) {
      transitions.push(transition_row(it.state, it.next_state), 0);
      states.push(it.state, 0);
    }
    auto [tm, ts] = column_moments(transitions);
    idm_.net().set_input_normalization(std::move(tm), std::move(ts));
    auto [sm, ss] = column_moments(states);
    policy_.net().set_input_normalization(std::move(sm), std::move(ss));
  }

  void resample(std::size_t it) {
    if (config_.sampling == SamplingMode::None) {
      training_set_ = latest_pos_;
      return;
    }
    Rng rng(derive_seed(config_.seed, stream::kSampling, it));
    const std::size_t total = pre_.size();
    const double p_win = data::win_probability(latest_pos_.runs);
    auto pre_sample = data::sample_pre(pre_, p_win, total, rng);
    std::vector<data::Interaction> pos_sample;
    if (config_.sampling == SamplingMode::Partial) {
      pos_sample = data::sample_post(latest_pos_, total, rng);
    } else {
      pos_sample = latest_pos_.interactions;
    }
    training_set_ = data::compose_training_set(config_.env_id, pre_.action_count, std::move(pre_sample),
                                               std::move(pos_sample), rng);
  }

  RunConfig config_;
  data::InteractionSet pre_;
  std::vector<data::Trajectory> demos_;
  Baselines baselines_;
  std::shared_ptr<const envs::Environment> env_;
  Learner idm_;
  Learner policy_;
  LabelledRows transitions_;
  data::InteractionSet training_set_;
  data::InteractionSet latest_pos_;
  std::vector<IterationReport> reports_;
  std::size_t idm_fits_ = 0;
  std::size_t policy_fits_ = 0;
};

/// Runs every iteration of a session built from `config` and returns the reports.
inline std::vector<IterationReport> abco_alpha(const RunConfig& config, data::InteractionSet pre,
                                               std::vector<data::Trajectory> demos, const Baselines& baselines) {
  AbcoSession session(config, std::move(pre), std::move(demos), baselines);
  return session.run();
}

}  // namespace ifo::training
