#include <doctest.h>

#include "dynlab/counterfactual.hpp"
#include "dynlab/error.hpp"
#include "helpers.hpp"

using namespace dynlab;

namespace {

CcaModel fitted_model(int hidden, int k_cca) {
  const Mat x = testing::random_mat(400, hidden, 71);
  const Mat y = x * testing::random_mat(hidden, hidden + 4, 72) + 0.5 * testing::random_mat(400, hidden + 4, 73);
  CcaOptions o;
  o.k_x = hidden;
  o.k_y = hidden + 4;
  o.k_cca = k_cca;
  return cca_fit(x, y, o);
}

}  // namespace

TEST_CASE("intervention masks partition canonical coordinates") {
  for (int k_cca : {1, 4, 10})
    for (int k = 0; k <= k_cca; ++k) {
      const auto keep = intervention_mask(Intervention::KeepTop, k, k_cca);
      const auto remove = intervention_mask(Intervention::RemoveTop, k, k_cca);
      REQUIRE(keep.size() == static_cast<std::size_t>(k_cca));
      for (int i = 0; i < k_cca; ++i) {
        CHECK(keep[static_cast<std::size_t>(i)] != remove[static_cast<std::size_t>(i)]);
        CHECK(remove[static_cast<std::size_t>(i)] == (i < k));
      }
      for (bool b : intervention_mask(Intervention::FullInjection, k, k_cca)) CHECK_FALSE(b);
    }
}

TEST_CASE("intervene: empty masks reproduce the reconstruction") {
  const CcaModel m = fitted_model(10, 10);
  const Vec h = testing::random_vec(10, 74);
  const Vec recon = cca_inverse(m, Side::Neural, cca_project(m, Side::Neural, h));
  InterventionSpec s;
  s.seed = 5;
  s.mode = Intervention::FullInjection;
  const Vec full = intervene(m, h, s);
  CHECK((full - recon).cwiseAbs().maxCoeff() < 1e-6);
  // Full-rank model: the reconstruction is h itself.
  CHECK((full - h).cwiseAbs().maxCoeff() < 1e-6);
  s.mode = Intervention::KeepTop;
  s.cutoff_k = 10;
  CHECK((intervene(m, h, s) - full).cwiseAbs().maxCoeff() < 1e-12);
  s.mode = Intervention::RemoveTop;
  s.cutoff_k = 0;
  CHECK((intervene(m, h, s) - full).cwiseAbs().maxCoeff() < 1e-12);
  s.mode = Intervention::ColdStart;
  CHECK(intervene(m, h, s).isZero());
}

TEST_CASE("intervene: lesions touch only the masked modes") {
  const CcaModel m = fitted_model(10, 10);
  const Vec h = testing::random_vec(10, 75);
  const Vec z = cca_project(m, Side::Neural, h);
  InterventionSpec s;
  s.cutoff_k = 3;
  s.seed = 9;
  for (Intervention mode : {Intervention::KeepTop, Intervention::RemoveTop}) {
    s.mode = mode;
    const Vec out = intervene(m, h, s);
    const Vec zo = cca_project(m, Side::Neural, out);
    const auto mask = intervention_mask(mode, 3, 10);
    for (int i = 0; i < 10; ++i)
      if (!mask[static_cast<std::size_t>(i)]) CHECK(zo[i] == doctest::Approx(z[i]).epsilon(1e-8));
      else CHECK(std::abs(zo[i] - z[i]) > 1e-9);
    CHECK((intervene(m, h, s) - out).isZero());
    s.seed = 10;
    CHECK_FALSE((intervene(m, h, s) - out).isZero());
    s.seed = 9;
  }
  s.cutoff_k = 11;
  CHECK_THROWS_AS(intervene(m, h, s), Error);
}

TEST_CASE("convergence time: BFS oracle confirms after two optimal episodes") {
  const MazeTask t = testing::ascii_maze({"#######", "#S....#", "#.###.#", "#...#G#", "#######"});
  const int sp = shortest_path_len(t);
  REQUIRE(sp == 6);
  OracleAgent oracle(t);
  const ConvergenceResult r = convergence_time(oracle, t);
  REQUIRE(r.t_conv);
  CHECK(*r.t_conv == 2 * sp);
  CHECK(r.episodes_to_optimal == 2);

  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const MazeTask m = generate_maze(seed, MazeConfig{});
    OracleAgent o(m);
    const ConvergenceResult rr = convergence_time(o, m);
    REQUIRE(rr.t_conv);
    CHECK(*rr.t_conv == 2 * shortest_path_len(m));
  }
}

TEST_CASE("convergence time: always-Up never converges") {
  const MazeTask t = testing::ascii_maze({"#####", "#G..#", "#.#.#", "#..S#", "#####"});
  ConstantAgent up(Action::Up);
  ConvergenceOptions o;
  o.trial_budget = 500;
  const ConvergenceResult r = convergence_time(up, t, o);
  CHECK_FALSE(r.t_conv);
  CHECK(r.value_or(o.trial_budget) == 500);

  const PolicyParams p = testing::constant_policy(Action::Up);
  CHECK_FALSE(convergence_time(p, t, Vec::Zero(8), o).t_conv);
}

TEST_CASE("counterfactual suite is deterministic and paired") {
  PolicyDims dims;
  dims.hidden = 10;
  const PolicyParams p = random_params(Arch::Gru, dims, 0.5, 81);
  const CcaModel m = fitted_model(10, 10);
  std::vector<CounterfactualTask> tasks;
  for (std::uint64_t s = 0; s < 4; ++s) {
    CounterfactualTask ct;
    ct.task = generate_maze(100 + s, MazeConfig{});
    ct.cycle.period = 1;
    ct.cycle.states = {testing::random_vec(10, 200 + s)};
    ct.cycle.source_task = ct.task.seed;
    tasks.push_back(ct);
  }
  CounterfactualOptions o;
  o.seed = 3;
  o.cutoff_k = 3;
  o.threads = 1;
  o.convergence.trial_budget = 300;
  const CounterfactualSummary a = counterfactual_suite(p, m, tasks, o);
  o.threads = 3;
  const CounterfactualSummary b = counterfactual_suite(p, m, tasks, o);
  REQUIRE(a.rows.size() == 16u);
  CHECK(a.n_tasks == 4);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].mode == kAllInterventions[i % 4]);
    CHECK(a.rows[i].task_seed == tasks[i / 4].task.seed);
    CHECK(a.rows[i].result.t_conv == b.rows[i].result.t_conv);
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto cold = convergence_time(p, tasks[i].task, Vec::Zero(10), o.convergence);
    CHECK(a.rows[4 * i].result.t_conv == cold.t_conv);
    const auto full = convergence_time(p, tasks[i].task, tasks[i].cycle.states[0], o.convergence);
    CHECK(a.rows[4 * i + 1].result.t_conv == full.t_conv);
  }
  for (double med : a.median) CHECK(med <= 300.0);
}
