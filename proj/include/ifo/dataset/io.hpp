#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifo/dataset/interaction.hpp"
#include "ifo/error.hpp"

namespace ifo::data {

inline constexpr int kEncodingVersion = 1;

/// A demonstration episode. Expert demonstrations are state-only; `actions`
/// is present only for labelled collections (behavioural-cloning baseline,
/// tests).
struct Trajectory {
  std::string env_id;
  std::vector<std::vector<double>> states;
  std::optional<std::vector<int>> actions;
  double episode_return = 0.0;
  bool success = false;

  std::size_t transitions() const { return states.empty() ? 0 : states.size() - 1; }

  bool operator==(const Trajectory&) const = default;
};

inline Trajectory strip_actions(Trajectory t) {
  t.actions.reset();
  return t;
}

namespace detail {

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

inline std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

inline nlohmann::json parse_line(const std::string& text, std::size_t line) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line);
  }
}

template <typename F>
auto field(const nlohmann::json& j, std::size_t line, F&& get) {
  try {
    return get(j);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad record: ") + e.what(), line);
  }
}

}  // namespace detail

/// JSON-Lines: a header object, then one {"s","a","sn","run","v"} object per interaction.
inline void save_interactions(const InteractionSet& set, const std::filesystem::path& path) {
  auto out = detail::open_for_write(path);
  nlohmann::ordered_json header = {{"format", "ifo-interactions"},
                                   {"version", kEncodingVersion},
                                   {"env_id", set.env_id},
                                   {"kind", to_string(set.kind)},
                                   {"action_count", set.action_count},
                                   {"state_dim", set.state_dim()},
                                   {"count", set.size()}};
  out << header.dump() << '\n';
  std::map<std::int64_t, bool> success;
  for (const auto& r : set.runs) success[r.run_id] = r.success;
  for (const auto& it : set.interactions) {
    nlohmann::ordered_json line = {{"s", it.state},
                                   {"a", it.action},
                                   {"sn", it.next_state},
                                   {"run", it.run_id},
                                   {"v", success.count(it.run_id) && success[it.run_id] ? 1 : 0}};
    out << line.dump() << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline InteractionSet load_interactions(const std::filesystem::path& path) {
  auto in = detail::open_for_read(path);
  std::string text;
  std::size_t line = 0;
  if (!std::getline(in, text)) throw ParseError("missing header", 1);
  ++line;
  const auto header = detail::parse_line(text, line);
  InteractionSet set;
  std::size_t expected = 0;
  detail::field(header, line, [&](const auto& h) {
    if (h.at("format").template get<std::string>() != "ifo-interactions") {
      throw ParseError("not an interaction file", 1);
    }
    if (h.at("version").template get<int>() != kEncodingVersion) {
      throw ParseError("unsupported encoding version", 1);
    }
    set.env_id = h.at("env_id").template get<std::string>();
    set.kind = set_kind_from_string(h.at("kind").template get<std::string>());
    set.action_count = h.at("action_count").template get<std::size_t>();
    expected = h.at("count").template get<std::size_t>();
    return 0;
  });

  std::map<std::int64_t, std::size_t> run_slot;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    const auto j = detail::parse_line(text, line);
    Interaction it;
    bool success = false;
    detail::field(j, line, [&](const auto& r) {
      it.state = r.at("s").template get<std::vector<double>>();
      it.action = r.at("a").template get<int>();
      it.next_state = r.at("sn").template get<std::vector<double>>();
      it.run_id = r.at("run").template get<std::int64_t>();
      success = r.at("v").template get<int>() != 0;
      return 0;
    });
    if (!set.interactions.empty() && (it.state.size() != set.state_dim() ||
                                      it.next_state.size() != set.state_dim())) {
      throw ParseError("state width differs from previous records", line);
    }
    if (it.action < 0 || static_cast<std::size_t>(it.action) >= set.action_count) {
      throw ParseError("action " + std::to_string(it.action) + " out of range", line);
    }
    auto [slot, inserted] = run_slot.try_emplace(it.run_id, set.runs.size());
    if (inserted) set.runs.push_back({it.run_id, {}, success});
    set.runs[slot->second].indices.push_back(set.interactions.size());
    set.interactions.push_back(std::move(it));
  }
  if (set.interactions.size() != expected) {
    throw ParseError("header announces " + std::to_string(expected) + " records, found " +
                         std::to_string(set.interactions.size()),
                     line);
  }
  return set;
}

/// JSON-Lines: a header, then one {"states","return","success"[,"actions"]} object per episode.
inline void save_demos(const std::vector<Trajectory>& demos, const std::string& env_id,
                       const std::filesystem::path& path) {
  auto out = detail::open_for_write(path);
  nlohmann::ordered_json header = {{"format", "ifo-demos"},
                                   {"version", kEncodingVersion},
                                   {"env_id", env_id},
                                   {"count", demos.size()}};
  out << header.dump() << '\n';
  for (const auto& t : demos) {
    nlohmann::ordered_json line = {{"states", t.states}, {"return", t.episode_return}, {"success", t.success}};
    if (t.actions) line["actions"] = *t.actions;
    out << line.dump() << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

struct DemoFile {
  std::string env_id;
  std::vector<Trajectory> demos;
};

inline DemoFile load_demos(const std::filesystem::path& path) {
  auto in = detail::open_for_read(path);
  std::string text;
  std::size_t line = 0;
  if (!std::getline(in, text)) throw ParseError("missing header", 1);
  ++line;
  const auto header = detail::parse_line(text, line);
  DemoFile file;
  std::size_t expected = 0;
  detail::field(header, line, [&](const auto& h) {
    if (h.at("format").template get<std::string>() != "ifo-demos") {
      throw ParseError("not a demonstration file", 1);
    }
    file.env_id = h.at("env_id").template get<std::string>();
    expected = h.at("count").template get<std::size_t>();
    return 0;
  });
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    const auto j = detail::parse_line(text, line);
    Trajectory t;
    t.env_id = file.env_id;
    detail::field(j, line, [&](const auto& r) {
      t.states = r.at("states").template get<std::vector<std::vector<double>>>();
      t.episode_return = r.at("return").template get<double>();
      t.success = r.at("success").template get<bool>();
      if (r.contains("actions")) t.actions = r.at("actions").template get<std::vector<int>>();
      return 0;
    });
    if (t.states.empty()) throw ParseError("trajectory without states", line);
    if (t.actions && t.actions->size() + 1 != t.states.size()) {
      throw ParseError("action count does not match state count", line);
    }
    file.demos.push_back(std::move(t));
  }
  if (file.demos.size() != expected) {
    throw ParseError("header announces " + std::to_string(expected) + " trajectories, found " +
                         std::to_string(file.demos.size()),
                     line);
  }
  return file;
}

}  // namespace ifo::data
