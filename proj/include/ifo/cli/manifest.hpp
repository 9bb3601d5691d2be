#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifo/training/artifacts.hpp"

#ifndef IFO_CODE_HASH
#define IFO_CODE_HASH "unknown"
#endif

namespace ifo::cli {

inline constexpr const char* kCodeHash = IFO_CODE_HASH;

/// Record of one command invocation: what ran, with which settings and
/// seeds, which files it read and wrote, and how long each phase took.
struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  nlohmann::ordered_json seeds = nlohmann::ordered_json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::map<std::string, double> timings_seconds;
  std::string status = "running";
  std::optional<std::size_t> last_completed_iteration;
  nlohmann::ordered_json results = nlohmann::ordered_json::object();

  void add_output(const std::filesystem::path& p) {
    const auto s = p.generic_string();
    for (const auto& o : outputs) {
      if (o == s) return;
    }
    outputs.push_back(s);
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = {{"format", "ifo-manifest"},
                                {"version", data::kEncodingVersion},
                                {"command", command},
                                {"argv", argv},
                                {"code_hash", kCodeHash},
                                {"config", config},
                                {"seeds", seeds},
                                {"inputs", inputs},
                                {"outputs", outputs},
                                {"timings_seconds", timings_seconds},
                                {"status", status}};
    j["last_completed_iteration"] =
        last_completed_iteration ? nlohmann::ordered_json(*last_completed_iteration) : nlohmann::ordered_json();
    j["results"] = results;
    return j;
  }

  void save(const std::filesystem::path& path) const {
    training::write_file_atomically(path, to_json().dump(2) + "\n");
  }
};

inline nlohmann::json load_manifest(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(training::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

/// Wall-clock stopwatch for manifest timings.
class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace ifo::cli
