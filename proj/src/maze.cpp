#include "dynlab/maze.hpp"

#include <deque>
#include <random>

#include <nlohmann/json.hpp>

#include "dynlab/error.hpp"
#include "dynlab/rng.hpp"

namespace dynlab {

Cell moved(Cell c, Action a) {
  switch (a) {
    case Action::Up: return {c.row - 1, c.col};
    case Action::Down: return {c.row + 1, c.col};
    case Action::Left: return {c.row, c.col - 1};
    case Action::Right: return {c.row, c.col + 1};
  }
  return c;
}

char action_char(Action a) { return "UDLR"[static_cast<int>(a)]; }

Action action_from_char(char c) {
  switch (c) {
    case 'U': return Action::Up;
    case 'D': return Action::Down;
    case 'L': return Action::Left;
    case 'R': return Action::Right;
    default: throw Error(ErrorCode::InvalidArgument, std::string("unknown action '") + c + "'");
  }
}

std::string_view event_name(StepEvent e) {
  switch (e) {
    case StepEvent::Flow: return "flow";
    case StepEvent::GoalReached: return "goal";
    case StepEvent::Timeout: return "timeout";
  }
  return "?";
}

std::vector<int> bfs_distances(const MazeTask& task, Cell from) {
  std::vector<int> dist(task.grid.size(), -1);
  if (!task.is_free(from)) return dist;
  std::deque<Cell> queue{from};
  dist[task.index(from)] = 0;
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    for (Action a : kAllActions) {
      const Cell n = moved(c, a);
      if (!task.is_free(n) || dist[task.index(n)] >= 0) continue;
      dist[task.index(n)] = dist[task.index(c)] + 1;
      queue.push_back(n);
    }
  }
  return dist;
}

int shortest_path_len(const MazeTask& task) {
  const int d = bfs_distances(task, task.start)[task.index(task.goal)];
  if (d < 0) throw Error(ErrorCode::Unreachable, "goal is not reachable from start");
  return d;
}

MazeTask generate_maze(std::uint64_t seed, int width, int height, double wall_prob) {
  if (width < 3 || height < 3) throw Error(ErrorCode::InvalidArgument, "maze must be at least 3x3");
  if (!(wall_prob >= 0.0 && wall_prob < 1.0))
    throw Error(ErrorCode::InvalidArgument, "wall_prob must lie in [0, 1)");

  MazeTask task;
  task.width = width;
  task.height = height;
  task.seed = seed;
  const auto n = static_cast<std::size_t>(width * height);
  for (int attempt = 0; attempt < kGenerateRetryLimit; ++attempt) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    task.grid.assign(n, 0);
    std::vector<Cell> free_cells;
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const bool wall = unit(rng) < wall_prob;
        task.grid[static_cast<std::size_t>(r * width + c)] = wall ? 1 : 0;
        if (!wall) free_cells.push_back({r, c});
      }
    }
    if (free_cells.size() < 2) continue;
    std::uniform_int_distribution<std::size_t> pick(0, free_cells.size() - 1);
    const std::size_t s = pick(rng);
    std::size_t g = pick(rng);
    while (g == s) g = pick(rng);
    task.start = free_cells[s];
    task.goal = free_cells[g];
    if (bfs_distances(task, task.start)[task.index(task.goal)] > 0) return task;
  }
  throw Error(ErrorCode::RetriesExhausted,
              "no connected maze within " + std::to_string(kGenerateRetryLimit) + " resamples");
}

Observation observe(const MazeTask& task, Cell pos) {
  Observation obs{};
  int k = 0;
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc, ++k) {
      const Cell c{pos.row + dr, pos.col + dc};
      int channel = 1;
      if (task.is_free(c)) channel = (c == task.goal) ? 2 : 0;
      obs[static_cast<std::size_t>(k * kChannels + channel)] = 1.0;
    }
  }
  return obs;
}

EnvState initial_state(const MazeTask& task) { return EnvState{task.start, 0, 0}; }

StepResult env_step(const MazeTask& task, const EnvState& state, Action action, int timeout) {
  StepResult out{state, StepEvent::Flow};
  const Cell target = moved(state.position, action);
  if (task.is_free(target)) out.state.position = target;
  out.state.steps_in_episode += 1;
  if (out.state.position == task.goal) {
    out.event = StepEvent::GoalReached;
  } else if (out.state.steps_in_episode >= timeout) {
    out.event = StepEvent::Timeout;
  }
  if (out.event != StepEvent::Flow) {
    out.state.position = task.start;
    out.state.steps_in_episode = 0;
    out.state.episode_index += 1;
  }
  return out;
}

void to_json(nlohmann::json& j, const MazeTask& task) {
  j = nlohmann::json{{"width", task.width},
                     {"height", task.height},
                     {"grid", task.grid},
                     {"start", {task.start.row, task.start.col}},
                     {"goal", {task.goal.row, task.goal.col}},
                     {"seed", task.seed}};
}

void from_json(const nlohmann::json& j, MazeTask& task) {
  task.width = j.at("width").get<int>();
  task.height = j.at("height").get<int>();
  task.grid = j.at("grid").get<std::vector<std::uint8_t>>();
  task.start = {j.at("start").at(0).get<int>(), j.at("start").at(1).get<int>()};
  task.goal = {j.at("goal").at(0).get<int>(), j.at("goal").at(1).get<int>()};
  task.seed = j.at("seed").get<std::uint64_t>();
  if (task.grid.size() != static_cast<std::size_t>(task.width * task.height))
    throw Error(ErrorCode::SchemaMismatch, "maze grid size does not match width*height");
}

}  // namespace dynlab
