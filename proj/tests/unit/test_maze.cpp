#include <doctest.h>

#include <deque>
#include <limits>
#include <queue>

#include <nlohmann/json.hpp>

#include "dynlab/error.hpp"
#include "dynlab/maze.hpp"
#include "helpers.hpp"

using namespace dynlab;

namespace {

// Flood fill from start over free cells; independent of bfs_distances.
bool flood_connected(const MazeTask& t) {
  std::vector<char> seen(t.grid.size(), 0);
  std::deque<Cell> q{t.start};
  seen[t.index(t.start)] = 1;
  while (!q.empty()) {
    const Cell c = q.front();
    q.pop_front();
    if (c == t.goal) return true;
    const Cell nb[4] = {{c.row - 1, c.col}, {c.row + 1, c.col}, {c.row, c.col - 1}, {c.row, c.col + 1}};
    for (Cell n : nb)
      if (t.is_free(n) && !seen[t.index(n)]) {
        seen[t.index(n)] = 1;
        q.push_back(n);
      }
  }
  return false;
}

// Dijkstra with unit weights over an explicit adjacency list.
int dijkstra(const MazeTask& t) {
  const int n = t.width * t.height;
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (int r = 0; r < t.height; ++r)
    for (int c = 0; c < t.width; ++c) {
      if (!t.is_free({r, c})) continue;
      if (t.is_free({r, c + 1})) {
        adj[static_cast<std::size_t>(r * t.width + c)].push_back(r * t.width + c + 1);
        adj[static_cast<std::size_t>(r * t.width + c + 1)].push_back(r * t.width + c);
      }
      if (t.is_free({r + 1, c})) {
        adj[static_cast<std::size_t>(r * t.width + c)].push_back((r + 1) * t.width + c);
        adj[static_cast<std::size_t>((r + 1) * t.width + c)].push_back(r * t.width + c);
      }
    }
  std::vector<int> dist(static_cast<std::size_t>(n), std::numeric_limits<int>::max());
  using Item = std::pair<int, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  const int s = t.start.row * t.width + t.start.col;
  dist[static_cast<std::size_t>(s)] = 0;
  pq.push({0, s});
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[static_cast<std::size_t>(u)]) continue;
    for (int v : adj[static_cast<std::size_t>(u)])
      if (d + 1 < dist[static_cast<std::size_t>(v)]) {
        dist[static_cast<std::size_t>(v)] = d + 1;
        pq.push({d + 1, v});
      }
  }
  return dist[static_cast<std::size_t>(t.goal.row * t.width + t.goal.col)];
}

int free_channel(const Observation& o, int k) { return static_cast<int>(o[static_cast<std::size_t>(k * kChannels)]); }
int wall_channel(const Observation& o, int k) { return static_cast<int>(o[static_cast<std::size_t>(k * kChannels + 1)]); }
int goal_channel(const Observation& o, int k) { return static_cast<int>(o[static_cast<std::size_t>(k * kChannels + 2)]); }

}  // namespace

TEST_CASE("generate_maze: wall_prob 0 gives an all-free grid") {
  const MazeTask t = generate_maze(7, 10, 10, 0.0);
  CHECK(t.grid.size() == 100u);
  for (auto v : t.grid) CHECK(v == 0);
  CHECK(flood_connected(t));
  CHECK_FALSE(t.start == t.goal);
}

TEST_CASE("generate_maze: deterministic per seed") {
  const MazeTask a = generate_maze(7, 10, 10, 0.3), b = generate_maze(7, 10, 10, 0.3);
  CHECK(a.grid == b.grid);
  CHECK(a.start == b.start);
  CHECK(a.goal == b.goal);
  const MazeTask c = generate_maze(8, 10, 10, 0.3);
  CHECK((c.grid != a.grid || !(c.start == a.start) || !(c.goal == a.goal)));
}

TEST_CASE("generate_maze: connectivity by flood fill") {
  CHECK(flood_connected(generate_maze(3, 10, 10, 0.3)));
  for (std::uint64_t s = 0; s < 200; ++s) {
    const MazeTask t = generate_maze(s, 10, 10, 0.3);
    REQUIRE(flood_connected(t));
    CHECK(t.is_free(t.start));
    CHECK(t.is_free(t.goal));
  }
}

TEST_CASE("generate_maze: invalid arguments") {
  CHECK_THROWS_AS(generate_maze(1, 0, 10, 0.3), Error);
  CHECK_THROWS_AS(generate_maze(1, 10, 10, 1.5), Error);
  CHECK_THROWS_AS(generate_maze(1, 1, 1, 0.0), Error);
}

TEST_CASE("observe: interior of a free maze") {
  const MazeTask t = testing::ascii_maze({"S.....", "......", "......", ".....G"});
  const Observation o = observe(t, {1, 2});
  for (int k = 0; k < 9; ++k) {
    CHECK(free_channel(o, k) == 1);
    CHECK(wall_channel(o, k) == 0);
    CHECK(goal_channel(o, k) == 0);
  }
}

TEST_CASE("observe: out-of-bounds reads as wall") {
  const MazeTask t = testing::ascii_maze({"S..", "...", "..G"});
  const Observation o = observe(t, {0, 0});
  // window row-major: k = (dr+1)*3 + (dc+1); out of bounds: k = 0,1,2,3,6
  for (int k : {0, 1, 2, 3, 6}) CHECK(wall_channel(o, k) == 1);
  for (int k : {4, 5, 7, 8}) CHECK(free_channel(o, k) == 1);
  double total = 0;
  for (double v : o) total += v;
  CHECK(total == 9.0);
}

TEST_CASE("observe: goal directly above") {
  const MazeTask t = testing::ascii_maze({"..G..", "..S..", "....."});
  const Observation o = observe(t, {1, 2});
  for (int k = 0; k < 9; ++k) CHECK(goal_channel(o, k) == (k == 1 ? 1 : 0));
}

TEST_CASE("env_step: blocking, goal reset and timeout") {
  const MazeTask t = testing::ascii_maze({"S#G", "..."});
  EnvState s = initial_state(t);
  StepResult r = env_step(t, s, Action::Right, 200);
  CHECK(r.state.position == Cell{0, 0});
  CHECK(r.state.steps_in_episode == 1);
  CHECK(r.event == StepEvent::Flow);

  s.position = {1, 2};
  s.steps_in_episode = 5;
  r = env_step(t, s, Action::Up, 200);
  CHECK(r.event == StepEvent::GoalReached);
  CHECK(r.state.position == t.start);
  CHECK(r.state.episode_index == 1);
  CHECK(r.state.steps_in_episode == 0);

  s = initial_state(t);
  s.steps_in_episode = 199;
  r = env_step(t, s, Action::Down, 200);
  CHECK(r.event == StepEvent::Timeout);
  CHECK(r.state.position == t.start);
  CHECK(r.state.episode_index == 1);
}

TEST_CASE("shortest_path_len") {
  MazeTask same = testing::ascii_maze({"S.."});
  same.goal = same.start;
  CHECK(shortest_path_len(same) == 0);
  for (int n : {2, 5, 12}) {
    std::string row(static_cast<std::size_t>(n), '.');
    row.front() = 'S';
    row.back() = 'G';
    CHECK(shortest_path_len(testing::ascii_maze({row})) == n - 1);
  }
  for (std::uint64_t s = 0; s < 100; ++s) {
    const MazeTask t = generate_maze(s, 10, 10, 0.3);
    CHECK(shortest_path_len(t) == dijkstra(t));
  }
  CHECK_THROWS_AS(shortest_path_len(testing::ascii_maze({"S#G"})), Error);
}

TEST_CASE("maze JSON round trip") {
  const MazeTask t = generate_maze(11, 10, 10, 0.3);
  const MazeTask u = nlohmann::json(t).get<MazeTask>();
  CHECK(u.grid == t.grid);
  CHECK(u.start == t.start);
  CHECK(u.goal == t.goal);
  CHECK(u.seed == t.seed);
}
