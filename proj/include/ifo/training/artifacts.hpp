#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ifo/dataset/io.hpp"
#include "ifo/error.hpp"
#include "ifo/nn/network.hpp"
#include "ifo/training/abco.hpp"
#include "ifo/training/rollout.hpp"

namespace ifo::training {

/// Shortest text that parses back to exactly `v` is not guaranteed by
/// printf; 17 significant digits always is.
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Writes `text` to `path` through a temporary sibling and a rename, so a
/// reader never observes a half-written file.
inline void write_file_atomically(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out << text;
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// What a checkpoint evaluates: a trained policy or one of the two reference actors.
enum class CheckpointKind { Policy, Expert, Random };

inline std::string_view to_string(CheckpointKind k) {
  switch (k) {
    case CheckpointKind::Policy: return "policy";
    case CheckpointKind::Expert: return "expert";
    case CheckpointKind::Random: return "random";
  }
  return "policy";
}

inline CheckpointKind checkpoint_kind_from_string(std::string_view s) {
  if (s == "policy") return CheckpointKind::Policy;
  if (s == "expert") return CheckpointKind::Expert;
  if (s == "random") return CheckpointKind::Random;
  throw IntegrityError("unknown checkpoint kind '" + std::string(s) + "'");
}

struct Checkpoint {
  CheckpointKind kind = CheckpointKind::Policy;
  std::string env_id;
  std::size_t iteration = 0;
  Baselines baselines;
  std::optional<RunConfig> config;
  std::optional<nn::Network> policy;
  std::optional<nn::Network> idm;

  Actor actor() const {
    switch (kind) {
      case CheckpointKind::Expert: return expert_actor();
      case CheckpointKind::Random: return random_actor();
      case CheckpointKind::Policy: break;
    }
    if (!policy) throw IntegrityError("policy checkpoint without policy weights");
    return greedy_actor(*policy);
  }
};

inline Checkpoint sentinel_checkpoint(CheckpointKind kind, const std::string& env_id, const Baselines& baselines) {
  Checkpoint c;
  c.kind = kind;
  c.env_id = env_id;
  c.baselines = baselines;
  return c;
}

inline Checkpoint session_checkpoint(const AbcoSession& s) {
  Checkpoint c;
  c.kind = CheckpointKind::Policy;
  c.env_id = s.config().env_id;
  c.iteration = s.reports().empty() ? 0 : s.reports().back().iteration;
  c.baselines = s.baselines();
  c.config = s.config();
  c.policy = s.policy().net().clone();
  c.idm = s.idm().net().clone();
  return c;
}

/// JSON document {"payload": {...}, "checksum": fnv1a64(payload.dump())}.
inline std::string checkpoint_to_string(const Checkpoint& c) {
  nlohmann::ordered_json payload = {{"format", "ifo-checkpoint"},
                                    {"version", data::kEncodingVersion},
                                    {"kind", to_string(c.kind)},
                                    {"env_id", c.env_id},
                                    {"iteration", c.iteration},
                                    {"expert_aer", c.baselines.expert_aer},
                                    {"random_aer", c.baselines.random_aer}};
  if (c.config) payload["config"] = to_json(*c.config);
  if (c.policy) payload["policy"] = nn::to_json(*c.policy);
  if (c.idm) payload["idm"] = nn::to_json(*c.idm);
  const std::string body = payload.dump();
  nlohmann::ordered_json doc = {{"payload", payload}, {"checksum", hex64(fnv1a64(body))}};
  return doc.dump() + "\n";
}

inline Checkpoint checkpoint_from_string(const std::string& text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    const auto& payload = doc.at("payload");
    if (doc.at("checksum").get<std::string>() != hex64(fnv1a64(payload.dump()))) {
      throw IntegrityError("checkpoint checksum mismatch");
    }
    if (payload.at("format").get<std::string>() != "ifo-checkpoint") {
      throw IntegrityError("not a checkpoint file");
    }
    Checkpoint c;
    c.kind = checkpoint_kind_from_string(payload.at("kind").get<std::string>());
    c.env_id = payload.at("env_id").get<std::string>();
    c.iteration = payload.at("iteration").get<std::size_t>();
    c.baselines = {payload.at("expert_aer").get<double>(), payload.at("random_aer").get<double>()};
    if (payload.contains("config")) c.config = run_config_from_json(payload.at("config"));
    if (payload.contains("policy")) c.policy = nn::network_from_json(payload.at("policy"));
    if (payload.contains("idm")) c.idm = nn::network_from_json(payload.at("idm"));
    if (c.kind == CheckpointKind::Policy && !c.policy) throw IntegrityError("policy checkpoint without weights");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw IntegrityError(std::string("checkpoint weights do not fit their network: ") + e.what());
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("checkpoint holds an invalid setting: ") + e.what());
  }
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  write_file_atomically(path, checkpoint_to_string(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_string(read_file(path));
}

inline std::string reports_csv_header(std::size_t action_count) {
  std::string h = "iteration,idm_validation_accuracy,win_probability,aer,performance,training_set_size,post_demo_size,degenerate";
  for (std::size_t a = 0; a < action_count; ++a) h += ",predicted_action_" + std::to_string(a);
  return h + "\n";
}

inline std::string reports_csv_row(const IterationReport& r) {
  std::string row = std::to_string(r.iteration) + "," + format_real(r.idm_validation_accuracy) + "," +
                    format_real(r.win_probability) + "," + format_real(r.aer) + "," + format_real(r.performance) +
                    "," + std::to_string(r.training_set_size) + "," + std::to_string(r.post_demo_size) + "," +
                    (r.degenerate ? "1" : "0");
  for (double h : r.action_prediction_histogram) row += "," + format_real(h);
  return row + "\n";
}

inline std::string reports_csv(const std::vector<IterationReport>& reports, std::size_t action_count) {
  std::string out = reports_csv_header(action_count);
  for (const auto& r : reports) out += reports_csv_row(r);
  return out;
}

/// Append-only JSON-Lines log; each event is flushed as soon as it is written.
class EventLog {
 public:
  explicit EventLog(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
  }

  void write(const nlohmann::ordered_json& event) {
    out_ << event.dump() << '\n';
    out_.flush();
    if (!out_) throw IoError("failed writing '" + path_.string() + "'");
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace ifo::training
