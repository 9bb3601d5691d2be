#pragma once

#include <array>
#include <memory>
#include <string>
#include <string_view>

#include "ifo/envs/acrobot.hpp"
#include "ifo/envs/cartpole.hpp"
#include "ifo/envs/environment.hpp"
#include "ifo/envs/maze.hpp"
#include "ifo/envs/mountain_car.hpp"
#include "ifo/error.hpp"

namespace ifo::envs {

inline constexpr std::array<std::string_view, 6> kEnvironmentIds{
    "cartpole", "acrobot", "mountaincar", "maze3", "maze5", "maze10"};

inline bool is_known_env(std::string_view id) {
  for (auto k : kEnvironmentIds) {
    if (k == id) return true;
  }
  return false;
}

inline bool is_maze(std::string_view id) { return id.substr(0, 4) == "maze"; }

inline int default_extra_openings(int size) { return size >= 5 ? 2 : 0; }

/// Environment by id with standard parameters. Throws ConfigError for unknown ids.
inline std::unique_ptr<Environment> make_env(std::string_view id) {
  if (id == "cartpole") return std::make_unique<CartPole>();
  if (id == "mountaincar") return std::make_unique<MountainCar>();
  if (id == "acrobot") return std::make_unique<Acrobot>();
  if (id == "maze3" || id == "maze5" || id == "maze10") {
    MazeParams p;
    p.size = std::stoi(std::string(id.substr(4)));
    p.extra_openings = default_extra_openings(p.size);
    return std::make_unique<Maze>(p);
  }
  throw ConfigError("unknown environment '" + std::string(id) + "'");
}

}  // namespace ifo::envs
