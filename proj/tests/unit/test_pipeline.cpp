#include <doctest.h>

#include <filesystem>
#include <set>

#include <nlohmann/json.hpp>

#include "dynlab/commands.hpp"
#include "dynlab/error.hpp"
#include "dynlab/es.hpp"
#include "dynlab/io.hpp"
#include "dynlab/pipeline.hpp"
#include "helpers.hpp"

using namespace dynlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("dynlab_pipeline_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

bool free_cell(const MazeTask& t, int r, int c) {
  return r >= 0 && c >= 0 && r < t.height && c < t.width && t.grid[static_cast<std::size_t>(r * t.width + c)] == 0;
}

// Steps a constant action takes from the start to the goal, or -1.
int straight_line_hit(const MazeTask& t, Action a) {
  static constexpr int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
  const int k = static_cast<int>(a);
  int r = t.start.row, c = t.start.col;
  for (int n = 1; free_cell(t, r + dr[k], c + dc[k]); ++n) {
    r += dr[k];
    c += dc[k];
    if (Cell{r, c} == t.goal) return n;
  }
  return -1;
}

// Hand-built sample: the drive follows the corridor from S to G.
Sample corridor_sample(std::uint64_t seed, int hidden) {
  Sample s;
  s.task = testing::ascii_maze({"#######", "#S...G#", "#######"});
  s.task.seed = seed;
  for (int c = 1; c <= 4; ++c) {
    s.drive.path.push_back({1, c});
    s.drive.obs_cycle.push_back(observe(s.task, {1, c}));
    s.drive.target_actions.push_back(Action::Right);
  }
  s.drive.goal = s.task.goal;
  s.drive.source_task = seed;
  s.cycle.period = 4;
  s.cycle.source_task = seed;
  s.cycle.consistent = true;
  for (int i = 0; i < 4; ++i) {
    s.cycle.states.push_back(testing::random_vec(hidden, seed * 10 + static_cast<std::uint64_t>(i)));
    s.cycle.actions.push_back(Action::Right);
    s.cycle.observations.push_back(s.drive.obs_cycle[static_cast<std::size_t>(i)]);
  }
  s.cycle.centroid = Vec::Zero(hidden);
  for (const Vec& h : s.cycle.states) s.cycle.centroid += h / 4.0;
  return s;
}

}  // namespace

TEST_CASE("held-out evaluation of constant policies matches a geometric oracle") {
  EsConfig cfg;
  cfg.seed = 3;
  const auto tasks = heldout_tasks(cfg, 60);
  for (Action a : kAllActions) {
    int reached = 0, optimal = 0;
    for (const MazeTask& t : tasks) {
      const int hit = straight_line_hit(t, a);
      reached += hit > 0;
      optimal += hit > 0 && hit == shortest_path_len(t);
    }
    const HeldoutReport r = evaluate_heldout(testing::constant_policy(a, cfg.dims.hidden), cfg, 60, 1);
    CHECK(r.n == 60);
    CHECK(r.reached == reached);
    CHECK(r.optimal == optimal);
  }
}

TEST_CASE("held-out and training maze seeds are disjoint") {
  EsConfig cfg;
  std::set<std::uint64_t> train;
  for (int g = 0; g < 300; ++g)
    for (int m = 0; m < 16; ++m) train.insert(training_maze_seed(cfg.seed, g, m));
  for (const MazeTask& t : heldout_tasks(cfg, 100)) CHECK(train.count(t.seed) == 0u);
  for (int i = 0; i < 100; ++i) CHECK(train.count(dataset_maze_seed(cfg.seed, i)) == 0u);
}

TEST_CASE("dataset, paths and fields round trip through disk") {
  const fs::path dir = scratch_dir("dataset");
  Dataset ds;
  for (std::uint64_t s = 1; s <= 3; ++s) ds.samples.push_back(corridor_sample(s, 6));
  ds.tasks_tried = 7;
  RunManifest m;
  save_dataset(ds, dir / "cycles", m, dir);
  const std::vector<Sample> back = load_dataset(dir / "cycles");
  REQUIRE(back.size() == 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].task.grid == ds.samples[i].task.grid);
    CHECK(back[i].drive.target_actions == ds.samples[i].drive.target_actions);
    CHECK(back[i].drive.path == ds.samples[i].drive.path);
    CHECK(back[i].cycle.centroid == ds.samples[i].cycle.centroid);
    CHECK(sample_id(back[i]) == std::to_string(i + 1));
  }
  CHECK(m.verify(dir).empty());
  CHECK(m.artifacts.size() == 4u);
  CHECK_THROWS_AS(load_dataset(dir), Error);

  const auto paths = dataset_paths(back);
  REQUIRE(paths.size() == 3u);
  CHECK(paths[0].cells.size() == 5u);
  CHECK(paths[0].cells.back() == Cell{1, 5});
  save_paths(paths, dir / "trajs.json", m, dir);
  const auto paths_back = load_paths(dir / "trajs.json");
  REQUIRE(paths_back.size() == 3u);
  CHECK(paths_back[2].id == "3");
  CHECK(paths_back[2].cells == paths[2].cells);

  BpfConfig cfg;
  cfg.grid_h = 5;
  cfg.grid_w = 9;
  const auto fields = build_fields(paths, cfg);
  save_fields(fields, {"1", "2", "3"}, dir / "fields", m, dir);
  const LoadedFields lf = load_fields(dir / "fields");
  CHECK(lf.config == cfg);
  CHECK(lf.ids == std::vector<std::string>{"1", "2", "3"});
  REQUIRE(lf.rows.rows() == 3);
  REQUIRE(lf.rows.cols() == 45);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 45; ++k)
      CHECK(lf.rows(i, k) == static_cast<double>(static_cast<float>(fields[static_cast<std::size_t>(i)].flat()[k])));
  CHECK(behavior_matrix(back, cfg).rows() == 3);
  CHECK(centroid_matrix(back).row(1).transpose() == ds.samples[1].cycle.centroid);
}

TEST_CASE("counterfactual tasks keep period == shortest path") {
  std::vector<Sample> s{corridor_sample(1, 6), corridor_sample(2, 6), corridor_sample(3, 6)};
  s[1].cycle.period = 5;
  const auto tasks = counterfactual_tasks(s, 10);
  REQUIRE(tasks.size() == 2u);
  CHECK(tasks[0].task.seed == 1u);
  CHECK(tasks[1].task.seed == 3u);
  CHECK(counterfactual_tasks(s, 1).size() == 1u);
}

TEST_CASE("pseudo-manifold control centroids respect the readout") {
  PolicyDims dims;
  dims.hidden = 8;
  const PolicyParams p = random_params(Arch::Gru, dims, 0.5, 5);
  std::vector<Sample> s{corridor_sample(1, 8), corridor_sample(2, 8)};
  s[1].drive.target_actions = {Action::Up, Action::Down, Action::Left, Action::Right};
  const Mat c = control_centroids(s, p, kControlMargin, 9);
  REQUIRE(c.rows() == 2);
  REQUIRE(c.cols() == 8);
  CHECK(c.allFinite());
  CHECK(control_centroids(s, p, kControlMargin, 9) == c);
  // All-Right drive: every pseudo-state reads out Right, and so does their mean
  // (the argmax region of a linear readout is convex).
  const Vec logits = p.w_out * c.row(0).transpose() + p.b_out;
  Eigen::Index best = 0;
  logits.maxCoeff(&best);
  CHECK(best == static_cast<Eigen::Index>(Action::Right));
}

TEST_CASE("ghost readout keeps recurrent weights") {
  PolicyDims dims;
  dims.hidden = 8;
  const PolicyParams p = random_params(Arch::Gru, dims, 0.3, 5);
  const PolicyParams g = with_random_readout(p, 1.0, 77);
  CHECK(g.w_in == p.w_in);
  CHECK(g.w_rec == p.w_rec);
  CHECK(g.bias == p.bias);
  CHECK(g.w_out != p.w_out);
  CHECK(with_random_readout(p, 1.0, 77).w_out == g.w_out);
  CHECK(with_random_readout(p, 1.0, 78).w_out != g.w_out);
}

TEST_CASE("mazes command writes a readable file") {
  const fs::path dir = scratch_dir("mazes");
  RunManifest m;
  const auto mazes = cmd_gen_mazes(4, 5, MazeConfig{}, dir / "mazes.json", m, dir);
  REQUIRE(mazes.size() == 5u);
  const auto j = read_json(dir / "mazes.json");
  CHECK(j.at("schema") == "dynlab.mazes.v1");
  REQUIRE(j.at("mazes").size() == 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    const MazeTask t = j.at("mazes")[i].get<MazeTask>();
    CHECK(t.grid == mazes[i].grid);
    CHECK(j.at("mazes")[i].at("shortest_path") == shortest_path_len(mazes[i]));
  }
}
