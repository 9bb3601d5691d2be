// Acceptance run: trains the required experiments through the ifo_lab binary,
// checks each criterion at its stated tolerance and prints one line per
// criterion. Completed runs built from the same code hash are reused.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ifo/cli/commands.hpp"
#include "ifo/cli/manifest.hpp"
#include "ifo/experts/experts.hpp"
#include "ifo/training/artifacts.hpp"
#include "support/attention_oracle.hpp"
#include "support/corridor_pipeline.hpp"
#include "support/equation_oracle.hpp"

namespace fs = std::filesystem;
using namespace ifo;

namespace {

const std::vector<std::uint64_t> kSeeds{0, 1, 2};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Runs {
 public:
  explicit Runs(fs::path work) : work_(std::move(work)) {
    fs::create_directories(work_ / "runs");
    fs::create_directories(work_ / "logs");
  }

  const fs::path& work() const { return work_; }

  /// The run directory of a completed run of `method` on `env`, training it
  /// first unless a complete run from this code version already exists.
  fs::path ensure(const cli::Method& method, const std::string& env, std::uint64_t seed) {
    const auto id = cli::run_id(method, env, seed);
    const fs::path dir = work_ / "runs" / id;
    if (fs::exists(dir / "manifest.json")) {
      const auto m = cli::load_manifest(dir / "manifest.json");
      if (m.value("status", "") == "complete" && m.value("code_hash", "") == cli::kCodeHash) return dir;
    }
    fs::remove_all(dir);
    const auto c = cli::method_config(method, env, seed);
    std::string cmd = quote(IFO_LAB_BINARY) + " train --env " + env + " --seed " + std::to_string(seed) +
                      " --alpha " + std::to_string(c.alpha) + " --sampling " + std::string(training::to_string(c.sampling)) +
                      " --attention " + (c.attention ? "on" : "off") + " --labels " +
                      std::string(training::to_string(c.labels)) + " --out " + quote(dir.string());
    const fs::path log = work_ / "logs" / (id + ".log");
    std::cout << "  training " << id << " ..." << std::flush;
    const auto start = std::chrono::steady_clock::now();
    const int code = shell(cmd + " >" + quote(log.string()) + " 2>&1");
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << " " << fmt(seconds, 0) << " s" << std::endl;
    if (code != 0) throw std::runtime_error("training " + id + " failed with exit code " + std::to_string(code));
    return dir;
  }

  nlohmann::json manifest(const fs::path& dir) const { return cli::load_manifest(dir / "manifest.json"); }

 private:
  fs::path work_;
};

const cli::Method& method(const std::vector<cli::Method>& methods, const std::string& slug) {
  for (const auto& m : methods) {
    if (m.slug == slug) return m;
  }
  throw std::logic_error("no method " + slug);
}

const cli::Method& ablation(const std::string& slug) {
  static const auto methods = cli::ablation_suite_methods();
  return method(methods, slug);
}

double final_of(const nlohmann::json& m, const char* key) {
  return m.at("results").at("final").at(key).get<double>();
}

// Mean final performance and AER of ABCO over the seeds.
struct SeedMeans {
  double performance = 0.0;
  double aer = 0.0;
  std::vector<nlohmann::json> manifests;
};

SeedMeans abco_means(Runs& runs, const std::string& env) {
  SeedMeans s;
  for (auto seed : kSeeds) {
    const auto m = runs.manifest(runs.ensure(ablation("abco"), env, seed));
    s.performance += final_of(m, "performance") / static_cast<double>(kSeeds.size());
    s.aer += final_of(m, "aer") / static_cast<double>(kSeeds.size());
    s.manifests.push_back(m);
  }
  return s;
}

Outcome cartpole(Runs& runs) {
  const auto s = abco_means(runs, "cartpole");
  double seconds = 0.0;
  for (const auto& m : s.manifests) seconds += m.at("timings_seconds").at("total").get<double>();
  Outcome o;
  o.pass = s.performance >= 0.95 && s.aer >= 475.0 && seconds <= 15 * 60;
  o.detail = "mean performance " + fmt(s.performance) + " (>= 0.95), mean AER " + fmt(s.aer, 1) +
             " (>= 475), 3 runs in " + fmt(seconds, 0) + " s (<= 900)";
  return o;
}

Outcome mountaincar(Runs& runs) {
  const auto s = abco_means(runs, "mountaincar");
  bool random_exact = true;
  for (const auto& m : s.manifests) random_exact &= m.at("results").at("random_aer").get<double>() == -200.0;
  Outcome o;
  o.pass = s.performance >= 0.80 && random_exact;
  o.detail = "mean performance " + fmt(s.performance) + " (>= 0.80), random AER " +
             (random_exact ? "-200 on every seed" : "differs from -200");
  return o;
}

// Held-out mazes solved by the final checkpoint out of 100.
std::size_t solved(const fs::path& dir, const nlohmann::json& m) {
  const auto alpha = m.at("config").at("alpha").get<std::size_t>();
  const auto ckpt = training::load_checkpoint(cli::checkpoint_path(dir, alpha));
  const auto seed = m.at("config").at("seed").get<std::uint64_t>();
  const auto r = training::evaluate_episodes(ckpt.env_id, ckpt.actor(), 100, seed);
  return static_cast<std::size_t>(std::llround(r.win_probability * 100.0));
}

Outcome mazes(Runs& runs) {
  Outcome o{true, ""};
  for (const auto& [env, threshold] : std::vector<std::pair<std::string, std::size_t>>{{"maze3", 80}, {"maze5", 60}}) {
    std::size_t good = 0;
    std::string counts;
    for (auto seed : kSeeds) {
      const auto dir = runs.ensure(ablation("abco"), env, seed);
      const auto n = solved(dir, runs.manifest(dir));
      good += n >= threshold;
      counts += (counts.empty() ? "" : "/") + std::to_string(n);
    }
    o.pass &= good >= 2;
    o.detail += (o.detail.empty() ? "" : "; ") + env + " solved " + counts + " of 100 (>= " +
                std::to_string(threshold) + " on 2 of 3 seeds)";
  }
  return o;
}

double mean_performance(Runs& runs, const std::string& slug, const std::string& env) {
  double p = 0.0;
  for (auto seed : kSeeds) {
    p += final_of(runs.manifest(runs.ensure(ablation(slug), env, seed)), "performance");
  }
  return p / static_cast<double>(kSeeds.size());
}

Outcome ablation_order(Runs& runs) {
  const double abco = mean_performance(runs, "abco", "maze5");
  const double partial = mean_performance(runs, "partial", "maze5");
  const double whole = mean_performance(runs, "whole", "maze5");
  const double attention = mean_performance(runs, "attention", "maze5");
  Outcome o;
  o.pass = abco > partial && partial > whole && abco > attention;
  o.detail = "ABCO " + fmt(abco) + ", partial " + fmt(partial) + ", whole " + fmt(whole) + ", attention " +
             fmt(attention) + " (need ABCO > partial > whole and ABCO > attention)";
  return o;
}

// Actions the expert takes in the demonstrations a run was trained on.
std::set<std::size_t> expert_actions(const nlohmann::json& config) {
  experts::DemoOptions options;
  options.keep_actions = true;
  options.experts_per_layout = config.at("experts_per_layout").get<std::size_t>();
  const auto demos = experts::collect_expert_demos(config.at("env").get<std::string>(),
                                                   config.at("n_demos").get<std::size_t>(),
                                                   config.at("seed").get<std::uint64_t>(), options);
  std::set<std::size_t> used;
  for (const auto& d : demos) {
    for (int a : *d.actions) used.insert(static_cast<std::size_t>(a));
  }
  return used;
}

// Smallest label frequency over the expert-used actions at iterations 0..5.
std::vector<double> min_frequency_by_iteration(const nlohmann::json& m, const std::set<std::size_t>& used) {
  std::vector<double> out;
  for (const auto& it : m.at("results").at("iterations")) {
    if (it.at("iteration").get<std::size_t>() > 5) break;
    const auto h = it.at("action_prediction_histogram").get<std::vector<double>>();
    double lowest = 1.0;
    for (auto a : used) lowest = std::min(lowest, h.at(a));
    out.push_back(lowest);
  }
  return out;
}

Outcome action_vanishing(Runs& runs) {
  std::size_t good = 0;
  std::string detail;
  for (auto seed : kSeeds) {
    const auto bco = runs.manifest(runs.ensure(ablation("bco"), "maze5", seed));
    const auto abco = runs.manifest(runs.ensure(ablation("abco"), "maze5", seed));
    const auto used = expert_actions(bco.at("config"));
    const auto b = min_frequency_by_iteration(bco, used);
    const auto a = min_frequency_by_iteration(abco, used);
    const double b_min = *std::min_element(b.begin(), b.end());
    const double a_min = *std::min_element(a.begin(), a.end());
    const bool vanished = b_min < 0.01;
    const bool kept = a_min > 0.01;
    good += vanished && kept;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + ": BCO min " +
              fmt(b_min, 4) + ", ABCO min " + fmt(a_min, 4);
  }
  return {good >= 2, detail + " (BCO < 0.01 and ABCO > 0.01 on 2 of 3 seeds)"};
}

Outcome equation_oracles() {
  const auto r = test_support::run_equation_oracles(4, 3, 20);
  std::string detail = std::to_string(r.configurations) + " configurations, " + std::to_string(r.checks) +
                       " checks, " + std::to_string(r.failures.size()) + " failures";
  if (!r.ok()) detail += " (first: " + r.failures.front() + ")";
  return {r.ok() && r.configurations > 0, detail};
}

Outcome attention() {
  const auto c = test_support::run_attention_checks(0);
  Outcome o;
  o.pass = c.identity_exact && c.oracle_error <= 1e-12 && c.gradient_error <= 1e-4;
  char buf[160];
  std::snprintf(buf, sizeof buf, "identity %s, oracle max error %.3g (<= 1e-12), gradient max relative error %.3g (<= 1e-4)",
                c.identity_exact ? "exact" : "inexact", c.oracle_error, c.gradient_error);
  o.detail = buf;
  return o;
}

Outcome corridor() {
  Outcome o{true, ""};
  for (auto seed : kSeeds) {
    const auto r = test_support::run_corridor_pipeline(seed);
    o.pass &= r.perfect();
    o.detail += (o.detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + ": IDM " +
                std::to_string(r.idm_correct) + "/" + std::to_string(r.idm_pairs) + ", labels " +
                std::to_string(r.labels_correct) + "/" + std::to_string(r.labels_total) + ", policy " +
                std::to_string(r.policy_correct) + "/" + std::to_string(r.policy_states);
  }
  return o;
}

// Runs the same command sequence in two directories.
std::vector<std::string> determinism_commands() {
  std::vector<std::string> cmds;
  for (auto env : envs::kEnvironmentIds) {
    const std::string e(env);
    cmds.push_back("collect " + e + " --pre 2000 --seed 11 --out pre_" + e + ".jsonl");
    cmds.push_back("collect " + e + " --expert 10 --seed 11 --out demos_" + e + ".jsonl");
  }
  cmds.push_back("collect maze5 --expert 20 --experts-per-layout 5 --labelled --seed 11 --out labelled_maze5.jsonl");
  const std::string tiny =
      " --alpha 2 --n-pre 2000 --n-demos 50 --rollouts 10 --eval-episodes 10 --idm-epochs 2 --policy-epochs 2";
  for (const auto& m : cli::ablation_suite_methods()) {
    cmds.push_back("train --env maze3 --seed 0 --sampling " + std::string(training::to_string(m.sampling)) +
                   " --attention " + (m.attention ? "on" : "off") + tiny + " --out runs/" + cli::run_id(m, "maze3", 0));
  }
  cmds.push_back("train --env cartpole --seed 5 --pre pre_cartpole.jsonl --demos demos_cartpole.jsonl" + tiny +
                 " --out cartpole_run");
  cmds.push_back("train --env acrobot --seed 5 --labels ground_truth --alpha 0 --n-pre 2000 --n-demos 5 "
                 "--eval-episodes 5 --policy-epochs 2 --out bc_run");
  cmds.push_back("sentinel expert maze3 --out expert.json");
  cmds.push_back("sentinel random cartpole --out random.json");
  cmds.push_back("eval --checkpoint expert.json --episodes 20 --seed 3");
  cmds.push_back("eval --checkpoint random.json --episodes 20");
  cmds.push_back("eval --checkpoint runs/abco-maze3-s0/checkpoints/iteration_2.json --episodes 50 --out eval_abco.json");
  cmds.push_back("table --suite ablation --env maze3 --runs runs --out ablation.csv");
  return cmds;
}

// File contents with the wall-clock timings removed from manifests.
std::string comparable(const fs::path& p) {
  const auto text = training::read_file(p);
  const auto name = p.filename().string();
  if (name == "manifest.json" || name.ends_with(".manifest.json")) {
    auto j = nlohmann::ordered_json::parse(text);
    j.erase("timings_seconds");
    return j.dump();
  }
  return text;
}

Outcome determinism(const fs::path& work) {
  const fs::path root = work / "determinism";
  fs::remove_all(root);
  const auto cmds = determinism_commands();
  for (const char* side : {"a", "b"}) {
    fs::create_directories(root / side);
    for (std::size_t i = 0; i < cmds.size(); ++i) {
      const auto out = root / side / ("stdout_" + std::to_string(i) + ".txt");
      const int code = shell("cd " + quote((root / side).string()) + " && " + quote(IFO_LAB_BINARY) + " " + cmds[i] +
                             " >" + quote(out.string()) + " 2>" + quote((root / (std::string(side) + "_stderr.txt")).string()));
      if (code != 0) return {false, "command failed with exit code " + std::to_string(code) + ": " + cmds[i]};
    }
  }
  std::set<fs::path> a_files, b_files;
  for (const auto& [side, files] : {std::pair{"a", &a_files}, std::pair{"b", &b_files}}) {
    for (const auto& e : fs::recursive_directory_iterator(root / side)) {
      if (e.is_regular_file()) files->insert(fs::relative(e.path(), root / side));
    }
  }
  if (a_files != b_files) return {false, "the two repetitions produced different file sets"};
  std::vector<std::string> differing;
  std::size_t manifests = 0;
  for (const auto& f : a_files) {
    const auto name = f.filename().string();
    manifests += name == "manifest.json" || name.ends_with(".manifest.json");
    if (comparable(root / "a" / f) != comparable(root / "b" / f)) differing.push_back(f.generic_string());
  }
  std::string detail = std::to_string(cmds.size()) + " commands, " + std::to_string(a_files.size()) +
                       " files compared (" + std::to_string(manifests) + " manifests without timings), " +
                       std::to_string(differing.size()) + " differ";
  if (!differing.empty()) detail += " (first: " + differing.front() + ")";
  return {differing.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = "acceptance_runs";
  std::vector<int> only;
  app.add_option("--work-dir", work, "Directory for runs, logs and the determinism check");
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);
  if (only.empty()) only = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  Runs runs{fs::path(work)};
  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria = {
      {1, {"CartPole ABCO end-to-end", [&] { return cartpole(runs); }}},
      {2, {"MountainCar ABCO", [&] { return mountaincar(runs); }}},
      {3, {"held-out mazes solved", [&] { return mazes(runs); }}},
      {4, {"Maze 5x5 ablation ordering", [&] { return ablation_order(runs); }}},
      {5, {"action vanishing diagnostic", [&] { return action_vanishing(runs); }}},
      {6, {"sampling equation oracles", equation_oracles}},
      {7, {"self-attention checks", attention}},
      {8, {"invertible corridor pipeline", corridor}},
      {9, {"CLI determinism", [&] { return determinism(runs.work()); }}},
  };

  // Cheap criteria first so their results appear before the long training runs.
  std::vector<int> order;
  for (int id : {6, 7, 8, 9, 1, 2, 3, 5, 4}) {
    if (std::find(only.begin(), only.end(), id) != only.end()) order.push_back(id);
  }
  std::map<int, Outcome> results;
  for (int id : order) {
    const auto& [name, check] = criteria.at(id);
    std::cout << "checking criterion " << id << ": " << name << std::endl;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail
              << std::endl;
    results[id] = o;
  }

  std::size_t passed = 0;
  std::cout << "\nsummary\n";
  for (const auto& [id, o] : results) {
    passed += o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << criteria.at(id).first << ": "
              << o.detail << "\n";
  }
  std::cout << "acceptance: " << passed << "/" << results.size() << " criteria passed" << std::endl;
  return passed == results.size() ? 0 : 1;
}
