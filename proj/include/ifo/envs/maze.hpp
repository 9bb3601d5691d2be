#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ifo/envs/environment.hpp"
#include "ifo/error.hpp"
#include "ifo/random.hpp"

namespace ifo::envs {

// Actions and wall bits share the direction order N, S, W, E.
enum Direction : int { kNorth = 0, kSouth = 1, kWest = 2, kEast = 3 };

inline constexpr std::array<std::uint8_t, 4> kWallBit{1, 2, 4, 8};
inline constexpr std::array<int, 4> kRowStep{-1, 1, 0, 0};
inline constexpr std::array<int, 4> kColStep{0, 0, -1, 1};
inline constexpr std::array<int, 4> kOpposite{kSouth, kNorth, kEast, kWest};

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

/// Grid of cells, each carrying a 4-bit wall mask (bit set = wall present).
struct MazeLayout {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> walls;

  static MazeLayout closed(int rows, int cols) {
    return {rows, cols, std::vector<std::uint8_t>(static_cast<std::size_t>(rows * cols), 15)};
  }

  std::size_t cell_count() const { return static_cast<std::size_t>(rows * cols); }
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.row * cols + c.col); }
  bool inside(Cell c) const { return c.row >= 0 && c.row < rows && c.col >= 0 && c.col < cols; }
  std::uint8_t mask(Cell c) const { return walls[index(c)]; }
  bool blocked(Cell c, int dir) const { return (mask(c) & kWallBit[dir]) != 0; }

  static Cell neighbour(Cell c, int dir) { return {c.row + kRowStep[dir], c.col + kColStep[dir]}; }

  void open(Cell c, int dir) {
    const Cell n = neighbour(c, dir);
    walls[index(c)] &= static_cast<std::uint8_t>(~kWallBit[dir]);
    walls[index(n)] &= static_cast<std::uint8_t>(~kWallBit[kOpposite[dir]]);
  }

  // Each shared edge has matching bits on both sides and the border is closed.
  bool consistent() const {
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        for (int d = 0; d < 4; ++d) {
          const Cell n = neighbour({r, c}, d);
          if (!inside(n)) {
            if (!blocked({r, c}, d)) return false;
          } else if (blocked({r, c}, d) != blocked(n, kOpposite[d])) {
            return false;
          }
        }
      }
    }
    return true;
  }

  std::size_t open_edges() const {
    std::size_t n = 0;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        if (c + 1 < cols && !blocked({r, c}, kEast)) ++n;
        if (r + 1 < rows && !blocked({r, c}, kSouth)) ++n;
      }
    }
    return n;
  }

  bool operator==(const MazeLayout&) const = default;
};

/// BFS step distances from `target` to every cell (-1 when unreachable).
inline std::vector<int> distances_to(const MazeLayout& layout, Cell target) {
  std::vector<int> dist(layout.cell_count(), -1);
  std::deque<Cell> frontier{target};
  dist[layout.index(target)] = 0;
  while (!frontier.empty()) {
    const Cell c = frontier.front();
    frontier.pop_front();
    for (int d = 0; d < 4; ++d) {
      if (layout.blocked(c, d)) continue;
      const Cell n = MazeLayout::neighbour(c, d);
      if (!layout.inside(n) || dist[layout.index(n)] >= 0) continue;
      dist[layout.index(n)] = dist[layout.index(c)] + 1;
      frontier.push_back(n);
    }
  }
  return dist;
}

/// A maze layout with agent and goal positions, plus its compact encoding:
/// three H*W channels (wall mask / 15, agent one-hot, goal one-hot), channel-major.
struct MazeObservation {
  MazeLayout layout;
  Cell agent;
  Cell goal;

  std::vector<double> encoded() const {
    const std::size_t n = layout.cell_count();
    std::vector<double> out(3 * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) out[i] = layout.walls[i] / 15.0;
    out[n + layout.index(agent)] = 1.0;
    out[2 * n + layout.index(goal)] = 1.0;
    return out;
  }
};

/// Perfect maze by recursive backtracking from the top-left cell, then
/// `extra_openings` random interior walls knocked down to create loops.
inline MazeObservation generate_maze(int size, std::uint64_t seed, int extra_openings) {
  if (size < 2) throw ConfigError("maze size must be at least 2");
  Rng rng(seed);
  MazeLayout layout = MazeLayout::closed(size, size);
  std::vector<bool> visited(layout.cell_count(), false);
  std::vector<Cell> stack{{0, 0}};
  visited[0] = true;
  while (!stack.empty()) {
    const Cell c = stack.back();
    std::array<int, 4> options{};
    std::size_t count = 0;
    for (int d = 0; d < 4; ++d) {
      const Cell n = MazeLayout::neighbour(c, d);
      if (layout.inside(n) && !visited[layout.index(n)]) options[count++] = d;
    }
    if (count == 0) {
      stack.pop_back();
      continue;
    }
    const int d = options[rng.below(count)];
    layout.open(c, d);
    const Cell n = MazeLayout::neighbour(c, d);
    visited[layout.index(n)] = true;
    stack.push_back(n);
  }

  std::vector<std::pair<Cell, int>> closed;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      if (c + 1 < size && layout.blocked({r, c}, kEast)) closed.push_back({{r, c}, kEast});
      if (r + 1 < size && layout.blocked({r, c}, kSouth)) closed.push_back({{r, c}, kSouth});
    }
  }
  rng.shuffle(std::span(closed));
  const std::size_t extra = std::min<std::size_t>(closed.size(), static_cast<std::size_t>(std::max(0, extra_openings)));
  for (std::size_t i = 0; i < extra; ++i) layout.open(closed[i].first, closed[i].second);

  return {std::move(layout), {0, 0}, {size - 1, size - 1}};
}

inline nlohmann::json maze_to_json(const MazeObservation& m) {
  nlohmann::json grid = nlohmann::json::array();
  for (int r = 0; r < m.layout.rows; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < m.layout.cols; ++c) row.push_back(m.layout.mask({r, c}));
    grid.push_back(row);
  }
  return {{"rows", m.layout.rows},
          {"cols", m.layout.cols},
          {"walls", grid},
          {"start", {m.agent.row, m.agent.col}},
          {"goal", {m.goal.row, m.goal.col}}};
}

inline MazeObservation maze_from_json(const nlohmann::json& j) {
  MazeObservation m;
  m.layout.rows = j.at("rows").get<int>();
  m.layout.cols = j.at("cols").get<int>();
  for (const auto& row : j.at("walls")) {
    for (const auto& v : row) m.layout.walls.push_back(v.get<std::uint8_t>());
  }
  if (m.layout.walls.size() != m.layout.cell_count() || !m.layout.consistent()) {
    throw ValidationError("maze wall grid is malformed or asymmetric");
  }
  m.agent = {j.at("start")[0].get<int>(), j.at("start")[1].get<int>()};
  m.goal = {j.at("goal")[0].get<int>(), j.at("goal")[1].get<int>()};
  if (!m.layout.inside(m.agent) || !m.layout.inside(m.goal)) {
    throw ValidationError("maze start or goal outside the grid");
  }
  if (distances_to(m.layout, m.goal)[m.layout.index(m.agent)] < 0) {
    throw ValidationError("maze goal unreachable from start");
  }
  return m;
}

struct MazeParams {
  int size = 5;
  int extra_openings = 2;
  // Per-step penalty is step_penalty_scale / (H * W); reaching the goal pays +1.
  double step_penalty_scale = 0.1;
  // Episode cap is cap_factor * H * W steps.
  std::size_t cap_factor = 10;
};

/// Grid maze, agent starts top-left and must reach the bottom-right goal.
/// Moving into a wall is legal and leaves the agent in place. Each reset
/// draws a fresh layout from the seed unless a fixed layout is supplied.
class Maze final : public Environment {
 public:
  explicit Maze(MazeParams params = {}, std::optional<MazeObservation> fixed = std::nullopt)
      : params_(params), fixed_(std::move(fixed)) {
    if (fixed_) {
      if (fixed_->layout.rows != fixed_->layout.cols) throw ConfigError("maze layouts must be square");
      params_.size = fixed_->layout.rows;
    }
    current_ = fixed_ ? *fixed_ : generate_maze(params_.size, 0, params_.extra_openings);
  }

  std::string id() const override { return "maze" + std::to_string(params_.size); }
  std::size_t action_count() const override { return 4; }
  std::size_t state_dim() const override { return 3 * cells(); }
  std::size_t max_steps() const override { return params_.cap_factor * cells(); }

  std::vector<double> observation() const override { return current_.encoded(); }

  std::unique_ptr<Environment> clone() const override { return std::make_unique<Maze>(*this); }

  const MazeObservation& maze() const { return current_; }
  const MazeParams& params() const { return params_; }
  double step_penalty() const { return params_.step_penalty_scale / static_cast<double>(cells()); }

 protected:
  void do_reset(std::uint64_t seed) override {
    current_ = fixed_ ? *fixed_ : generate_maze(params_.size, seed, params_.extra_openings);
    current_.agent = fixed_ ? fixed_->agent : Cell{0, 0};
  }

  std::pair<double, bool> do_step(int action) override {
    if (!current_.layout.blocked(current_.agent, action)) {
      current_.agent = MazeLayout::neighbour(current_.agent, action);
    }
    const bool at_goal = current_.agent == current_.goal;
    return {(at_goal ? 1.0 : 0.0) - step_penalty(), at_goal};
  }

  bool goal_reached() const override { return current_.agent == current_.goal; }

 private:
  std::size_t cells() const { return static_cast<std::size_t>(params_.size * params_.size); }

  MazeParams params_;
  std::optional<MazeObservation> fixed_;
  MazeObservation current_;
};

}  // namespace ifo::envs
