#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "dynlab/error.hpp"
#include "dynlab/es.hpp"
#include "dynlab/hds.hpp"
#include "helpers.hpp"

using namespace dynlab;

namespace {

// Step-by-step trial without the timeout-replay shortcut.
FitnessRecord naive_fitness(const PolicyParams& params, const MazeTask& task, const EsConfig& cfg) {
  FitnessRecord rec;
  rec.l_last = cfg.episode_timeout;
  const auto to_goal = bfs_distances(task, task.goal);
  rec.closest_distance = to_goal[task.index(task.start)];
  JointState x{initial_state(task), Vec::Zero(params.dims.hidden)};
  for (int t = 0; t < cfg.trial_budget; ++t) {
    auto st = closed_loop_step(params, task, x, cfg.episode_timeout);
    if (st.result.event == StepEvent::GoalReached) {
      rec.l_last = x.env.steps_in_episode + 1;
      rec.reached_goal = true;
      rec.successes++;
      rec.closest_distance = 0;
    } else {
      rec.closest_distance = std::min(rec.closest_distance, to_goal[task.index(st.result.state.position)]);
      if (st.result.event == StepEvent::Timeout) st.h_next.setZero();
    }
    x.env = st.result.state;
    x.h = st.h_next;
    if (st.result.event != StepEvent::Flow) {
      rec.episodes++;
      if (cfg.episodes_per_trial > 0 && rec.episodes >= cfg.episodes_per_trial) break;
    }
  }
  return rec;
}

bool same(const FitnessRecord& a, const FitnessRecord& b) {
  return a.l_last == b.l_last && a.reached_goal == b.reached_goal && a.episodes == b.episodes &&
         a.successes == b.successes && a.closest_distance == b.closest_distance;
}

}  // namespace

TEST_CASE("evaluate_fitness: optimal corridor policy") {
  const MazeTask t = testing::ascii_maze({"S......G"});
  EsConfig cfg;
  const FitnessRecord r = evaluate_fitness(testing::constant_policy(Action::Right), t, cfg);
  CHECK(r.reached_goal);
  CHECK(r.l_last == shortest_path_len(t));
  CHECK(r.successes == cfg.trial_budget / 7);
  CHECK(r.closest_distance == 0);
}

TEST_CASE("evaluate_fitness: always-Up into a wall") {
  const MazeTask t = testing::ascii_maze({"S..", "...", "..G"});
  EsConfig cfg;
  const FitnessRecord r = evaluate_fitness(testing::constant_policy(Action::Up), t, cfg);
  CHECK_FALSE(r.reached_goal);
  CHECK(r.l_last == cfg.episode_timeout);
  CHECK(r.episodes == cfg.trial_budget / cfg.episode_timeout);
  CHECK(r.closest_distance == 4);
}

TEST_CASE("evaluate_fitness: deterministic") {
  EsConfig cfg;
  const PolicyParams p = random_params(Arch::Gru, cfg.dims, 0.5, 3);
  const MazeTask t = generate_maze(5, cfg.maze);
  CHECK(same(evaluate_fitness(p, t, cfg), evaluate_fitness(p, t, cfg)));
}

TEST_CASE("evaluate_fitness: timeout replay agrees with step-by-step simulation") {
  EsConfig cfg;
  cfg.dims.hidden = 16;
  int n = 0;
  for (std::uint64_t s = 0; s < 12; ++s) {
    const PolicyParams p = random_params(Arch::Gru, cfg.dims, 0.3 + 0.15 * static_cast<double>(s % 6), s);
    for (std::uint64_t m = 0; m < 5; ++m) {
      const MazeTask task = generate_maze(1000 + m, cfg.maze);
      for (int timeout : {200, 37, 150}) {
        cfg.episode_timeout = timeout;
        CHECK(same(evaluate_fitness(p, task, cfg), naive_fitness(p, task, cfg)));
        ++n;
      }
    }
  }
  cfg.episode_timeout = 50;
  cfg.episodes_per_trial = 3;
  const PolicyParams p = random_params(Arch::Gru, cfg.dims, 1.0, 99);
  const MazeTask task = generate_maze(77, cfg.maze);
  CHECK(same(evaluate_fitness(p, task, cfg), naive_fitness(p, task, cfg)));
  CHECK(n == 180);
}

TEST_CASE("centered_rank_transform") {
  const std::vector<double> f{1.0, 5.0, 3.0};
  const auto w = centered_rank_transform(f);
  CHECK(w[0] == 0.5);
  CHECK(w[1] == -0.5);
  CHECK(w[2] == 0.0);
  const std::vector<double> eq(6, 2.0);
  for (double v : centered_rank_transform(eq)) CHECK(v == 0.0);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Vec r = testing::random_vec(64, s);
    std::vector<double> v(r.data(), r.data() + r.size());
    v[3] = v[7];  // a tie
    double sum = 0;
    for (double x : centered_rank_transform(v)) {
      sum += x;
      CHECK(x >= -0.5);
      CHECK(x <= 0.5);
    }
    CHECK(std::abs(sum) < 1e-12);
  }
  // without ties, mirrored ranks carry exactly negated weights
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Vec r = testing::random_vec(128, 40 + s);
    auto w = centered_rank_transform(std::vector<double>(r.data(), r.data() + r.size()));
    std::sort(w.begin(), w.end());
    for (std::size_t k = 0; k < w.size(); ++k) CHECK(w[k] == -w[w.size() - 1 - k]);
  }
  CHECK_THROWS_AS(centered_rank_transform(std::vector<double>{1.0}), Error);
}

TEST_CASE("es_update") {
  const Vec theta = testing::random_vec(10, 1);
  const Mat noise = testing::random_mat(6, 10, 2);
  CHECK(es_update(theta, noise, std::vector<double>(6, 0.0), 0.1, 0.5) == theta);
  Mat anti(2, 10);
  anti.row(0) = testing::random_vec(10, 3).transpose();
  anti.row(1) = -anti.row(0);
  CHECK(es_update(theta, anti, std::vector<double>{0.3, 0.3}, 0.1, 0.5) == theta);
  std::vector<double> w(6, 0.0);
  w[2] = 1.0;
  const double lr = 0.03, sigma = 0.05;
  const Vec expect = theta + lr / (6 * sigma) * noise.row(2).transpose();
  CHECK((es_update(theta, noise, w, sigma, lr) - expect).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(es_update(theta, noise, std::vector<double>(5, 0.0), sigma, lr), Error);
}

TEST_CASE("adam_step: first step moves each coordinate by about lr") {
  AdamState s;
  const Vec theta = Vec::Zero(4);
  Vec g(4);
  g << 2.0, -0.5, 1e-3, -7.0;
  const Vec out = adam_step(theta, g, 0.01, s);
  for (int i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(0.01 * (g[i] > 0 ? 1 : -1)).epsilon(1e-4));
  CHECK(s.t == 1);
}

TEST_CASE("train: zero generations and log length") {
  EsConfig cfg;
  cfg.population_size = 4;
  cfg.dims.hidden = 4;
  cfg.trial_budget = 60;
  cfg.episode_timeout = 20;
  cfg.eval_mazes_per_candidate = 1;
  cfg.threads = 1;
  cfg.generations = 0;
  const PolicyParams init = random_params(cfg.arch, cfg.dims, 0.2, 5);
  const TrainResult r0 = train_from(cfg, init);
  CHECK(flatten_params(r0.params) == flatten_params(init));
  CHECK(r0.log.empty());
  cfg.generations = 3;
  const TrainResult r3 = train_from(cfg, init);
  CHECK(r3.log.size() == 3u);
  CHECK(r3.log[2].generation == 2);
  // worker count does not change the result
  cfg.threads = 3;
  CHECK(flatten_params(train_from(cfg, init).params) == flatten_params(r3.params));
}

TEST_CASE("train: best-centre selection") {
  EsConfig cfg;
  cfg.population_size = 4;
  cfg.dims.hidden = 4;
  cfg.trial_budget = 60;
  cfg.episode_timeout = 20;
  cfg.eval_mazes_per_candidate = 1;
  cfg.threads = 1;
  cfg.generations = 5;
  cfg.select_every = 2;
  cfg.select_mazes = 3;
  const PolicyParams init = random_params(cfg.arch, cfg.dims, 0.2, 5);
  const TrainResult r = train_from(cfg, init);
  CHECK(r.selected_generation >= -1);
  CHECK(r.selected_generation < 5);
  if (r.selected_generation == -1) CHECK(flatten_params(r.params) == flatten_params(init));
  // selection off: the last centre is returned
  cfg.select_every = 0;
  const TrainResult last = train_from(cfg, init);
  CHECK(last.selected_generation == 4);
  cfg.select_every = 1;
  cfg.generations = 0;
  CHECK(train_from(cfg, init).selected_generation == -1);
  cfg.select_mazes = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("EsConfig validation and JSON") {
  EsConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.population_size = 3;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = EsConfig{};
  cfg.sigma = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = EsConfig{};
  cfg.optimizer = EsOptimizer::Adam;
  cfg.shaped_penalty = true;
  const EsConfig back = nlohmann::json(cfg).get<EsConfig>();
  CHECK(back.optimizer == EsOptimizer::Adam);
  CHECK(back.shaped_penalty);
  CHECK(back.population_size == cfg.population_size);
  CHECK(back.select_every == cfg.select_every);
  CHECK(back.select_mazes == cfg.select_mazes);
  nlohmann::json bad = cfg;
  bad["optimizer"] = "rmsprop";
  CHECK_THROWS_AS(bad.get<EsConfig>(), Error);
}

TEST_CASE("training and held-out seed families are disjoint") {
  std::set<std::uint64_t> train_seeds;
  for (int g = 0; g < 50; ++g)
    for (int i = 0; i < 4; ++i) train_seeds.insert(training_maze_seed(1, g, i));
  for (int i = 0; i < 100; ++i) CHECK(train_seeds.count(heldout_maze_seed(1, i)) == 0);
  for (int i = 0; i < 64; ++i) {
    CHECK(train_seeds.count(validation_maze_seed(1, i)) == 0);
    for (int j = 0; j < 100; ++j) CHECK(validation_maze_seed(1, i) != heldout_maze_seed(1, j));
  }
}
