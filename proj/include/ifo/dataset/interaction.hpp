#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ifo/error.hpp"

namespace ifo::data {

enum class SetKind { Pre, Pos, Composed };

inline std::string_view to_string(SetKind k) {
  switch (k) {
    case SetKind::Pre: return "pre";
    case SetKind::Pos: return "pos";
    case SetKind::Composed: return "composed";
  }
  return "pre";
}

inline SetKind set_kind_from_string(std::string_view s) {
  if (s == "pre") return SetKind::Pre;
  if (s == "pos") return SetKind::Pos;
  if (s == "composed") return SetKind::Composed;
  throw ConfigError("unknown interaction set kind '" + std::string(s) + "'");
}

/// One (s_t, a_t, s_{t+1}) transition with the id of the run it came from.
struct Interaction {
  std::vector<double> state;
  int action = 0;
  std::vector<double> next_state;
  std::int64_t run_id = 0;

  bool operator==(const Interaction&) const = default;
};

/// One rollout: which interactions belong to it and whether it reached the goal.
struct RunRecord {
  std::int64_t run_id = 0;
  std::vector<std::size_t> indices;
  bool success = false;

  bool operator==(const RunRecord&) const = default;
};

struct InteractionSet {
  SetKind kind = SetKind::Pre;
  std::string env_id;
  std::size_t action_count = 0;
  std::vector<Interaction> interactions;
  std::vector<RunRecord> runs;

  bool empty() const { return interactions.empty(); }
  std::size_t size() const { return interactions.size(); }
  std::size_t state_dim() const { return interactions.empty() ? 0 : interactions.front().state.size(); }

  void add_run(std::int64_t run_id, std::vector<Interaction> steps, bool success) {
    RunRecord run{run_id, {}, success};
    for (auto& step : steps) {
      step.run_id = run_id;
      run.indices.push_back(interactions.size());
      interactions.push_back(std::move(step));
    }
    runs.push_back(std::move(run));
  }

  // Throws ValidationError when widths or action ids disagree with the header.
  void validate() const {
    const std::size_t width = state_dim();
    for (std::size_t i = 0; i < interactions.size(); ++i) {
      const auto& it = interactions[i];
      if (it.state.size() != width || it.next_state.size() != width) {
        throw ValidationError("interaction " + std::to_string(i) + " has inconsistent state width");
      }
      if (it.action < 0 || static_cast<std::size_t>(it.action) >= action_count) {
        throw ValidationError("interaction " + std::to_string(i) + " has action " +
                              std::to_string(it.action) + " outside [0, " +
                              std::to_string(action_count) + ")");
      }
    }
  }

  bool operator==(const InteractionSet&) const = default;
};

/// Probability vector over actions. `raw_mass` keeps the unnormalised value
/// when the distribution was produced by a weighted average that need not sum
/// to one. An all-zero `probs` is the sentinel for "no successful runs".
struct ActionDistribution {
  std::vector<double> probs;
  std::vector<double> raw_mass;

  bool is_zero() const {
    for (double p : probs) {
      if (p != 0.0) return false;
    }
    return true;
  }
};

}  // namespace ifo::data
