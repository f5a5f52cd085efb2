#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace dynlab {

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

enum class Action : std::uint8_t { Up = 0, Down = 1, Left = 2, Right = 3 };
inline constexpr int kNumActions = 4;
inline constexpr std::array<Action, kNumActions> kAllActions{Action::Up, Action::Down, Action::Left,
                                                             Action::Right};

Cell moved(Cell c, Action a);
char action_char(Action a);
Action action_from_char(char c);

enum class StepEvent : std::uint8_t { Flow, GoalReached, Timeout };
std::string_view event_name(StepEvent e);

// One procedurally generated maze. The grid is row-major, 1 = wall.
struct MazeTask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> grid;
  Cell start;
  Cell goal;
  std::uint64_t seed = 0;

  bool in_bounds(Cell c) const { return c.row >= 0 && c.row < height && c.col >= 0 && c.col < width; }
  bool is_wall(Cell c) const { return grid[static_cast<std::size_t>(c.row * width + c.col)] != 0; }
  bool is_free(Cell c) const { return in_bounds(c) && !is_wall(c); }
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.row * width + c.col); }
};

struct MazeConfig {
  int width = 10;
  int height = 10;
  double wall_prob = 0.3;
};

inline constexpr int kGenerateRetryLimit = 1000;
inline constexpr int kDefaultEpisodeTimeout = 200;

// Samples walls i.i.d. with wall_prob, then start/goal uniformly among free
// cells, resampling with derived sub-seeds until start reaches goal.
MazeTask generate_maze(std::uint64_t seed, int width, int height, double wall_prob);
inline MazeTask generate_maze(std::uint64_t seed, const MazeConfig& cfg) {
  return generate_maze(seed, cfg.width, cfg.height, cfg.wall_prob);
}

// 3x3 window around the agent, channels (Free, Wall, Goal) per cell,
// row-major over the window. Out-of-bounds cells read as Wall.
inline constexpr int kWindow = 3;
inline constexpr int kChannels = 3;
inline constexpr int kObservationDim = kWindow * kWindow * kChannels;
using Observation = std::array<double, kObservationDim>;

Observation observe(const MazeTask& task, Cell pos);

struct EnvState {
  Cell position;
  int steps_in_episode = 0;
  int episode_index = 0;
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

EnvState initial_state(const MazeTask& task);

struct StepResult {
  EnvState state;
  StepEvent event = StepEvent::Flow;
};

StepResult env_step(const MazeTask& task, const EnvState& state, Action action, int timeout);

// BFS distance from start to goal; throws Unreachable.
int shortest_path_len(const MazeTask& task);
// BFS distances from `from` to every cell (-1 for unreachable or walls).
std::vector<int> bfs_distances(const MazeTask& task, Cell from);

void to_json(nlohmann::json& j, const MazeTask& task);
void from_json(const nlohmann::json& j, MazeTask& task);

}  // namespace dynlab
