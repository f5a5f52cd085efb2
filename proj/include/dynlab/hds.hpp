#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dynlab/maze.hpp"
#include "dynlab/policy.hpp"
#include "dynlab/types.hpp"

namespace dynlab {

// x_t = (s_t, h_t).
struct JointState {
  EnvState env;
  Vec h;
};

// One application of the joint map: observe s_t, h_{t+1} = f(h_t, o_t),
// a_t = argmax readout(h_{t+1}), s_{t+1} = env_step(s_t, a_t). The jump
// map (goal/timeout reset) is applied by env_step; memory is untouched here.
struct LoopStep {
  Observation obs;
  Vec h_next;
  Action action = Action::Up;
  StepResult result;
};

LoopStep closed_loop_step(const PolicyParams& params, const MazeTask& task, const JointState& x, int timeout);

// states[t] is x_t *before* step t; observations/actions/events are those
// produced by step t. All four sequences have the same length.
struct Trajectory {
  std::vector<JointState> states;
  std::vector<Observation> observations;
  std::vector<Action> actions;
  std::vector<StepEvent> events;
  std::uint64_t task_seed = 0;

  std::size_t size() const { return states.size(); }
};

struct RolloutOptions {
  int timeout = kDefaultEpisodeTimeout;
  bool reset_hidden_on_timeout = false;
  std::optional<Vec> h0;  // defaults to zeros
};

Trajectory rollout(const PolicyParams& params, const MazeTask& task, int total_steps,
                   const RolloutOptions& options = {});

// Step-index range [begin, end) of one episode; `end - begin` is its length.
struct EpisodeSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  StepEvent terminal = StepEvent::Flow;
  std::size_t length() const { return end - begin; }
};

// Completed episodes only (the trailing partial episode is dropped).
std::vector<EpisodeSpan> episode_spans(const Trajectory& traj);

bool same_actions(const Trajectory& traj, const EpisodeSpan& a, const EpisodeSpan& b);

inline constexpr int kConvergenceRepeats = 3;

// Index of the first episode that completes a run of `repeats` consecutive
// goal-reaching episodes with identical action sequences.
std::optional<std::size_t> first_converged_episode(const Trajectory& traj, int repeats = kConvergenceRepeats);
// True when the last `repeats` completed episodes qualify.
bool is_converged(const Trajectory& traj, int repeats = kConvergenceRepeats);

// ---- finite-time Lyapunov indicator -------------------------------------

struct FtliRecord {
  int t0 = 0;
  int horizon = 0;  // K: number of separation samples (K - 1 map steps)
  double eps = 0.0;
  double lambda = 0.0;
  // delta_series[0] = eps, delta_series[k] = separation after map step k
  // measured from a shadow renormalized to eps after every step, so
  // lambda = sum_k log(delta_series[k] / eps) / (K - 1).
  std::vector<double> delta_series;
  bool converged = false;
};

double ftli_from_series(std::span<const double> delta_series);

using StepMap = std::function<Vec(const Vec& h, int k)>;

// Benettin-style estimate along the nominal orbit h_{k+1} = step(h_k, k).
FtliRecord ftli_map(const StepMap& step, const Vec& h0, int horizon, double eps, const Vec& direction);

struct FtliOptions {
  int timeout = kDefaultEpisodeTimeout;
  int warmup_budget = 1000;  // steps allowed to reach the converged regime
  std::uint64_t seed = 0;
};

// t0 is the end of the first converged episode run, or warmup_budget when
// the closed loop never converges.
struct ConvergedStart {
  int t0 = 0;
  bool converged = false;
};
ConvergedStart find_converged_start(const PolicyParams& params, const MazeTask& task, const FtliOptions& options);

FtliRecord ftli(const PolicyParams& params, const MazeTask& task, int t0, int horizon, double eps,
                const FtliOptions& options = {});
// Convenience: t0 from find_converged_start.
FtliRecord ftli_converged(const PolicyParams& params, const MazeTask& task, int horizon, double eps,
                          const FtliOptions& options = {});

struct FtliSummary {
  std::vector<std::uint64_t> task_seeds;
  std::vector<double> lambdas;
  std::vector<bool> converged;
  double median = 0.0;
  double fraction_negative = 0.0;
};

FtliSummary ftli_histogram(const PolicyParams& params, std::span<const MazeTask> tasks, int horizon, double eps,
                           const FtliOptions& options = {}, unsigned threads = 0);

// ---- perturbation recovery ----------------------------------------------

struct RecoveryCurve {
  double eps = 0.0;
  int variant = 0;
  int period = 0;
  std::vector<double> distance;  // distance to the nominal cycle, per step after t_star
};

struct PerturbOptions {
  int timeout = kDefaultEpisodeTimeout;
  int horizon = 200;
  bool closed_loop = false;  // false: perturbed state is driven by the nominal observation stream
  std::uint64_t seed = 0;
};

// Nominal cycle = hidden states of the last goal-reaching episode completed
// at or before t_star; throws NotConverged if the nominal rollout has not
// converged by then.
std::vector<RecoveryCurve> perturb_and_recover(const PolicyParams& params, const MazeTask& task, int t_star,
                                               std::span<const double> eps_list, int n_variants,
                                               const PerturbOptions& options = {});

// Smallest k <= max_steps with distance[k] < fraction * distance[0].
std::optional<int> recovery_step(const RecoveryCurve& curve, double fraction, int max_steps);

double median(std::vector<double> values);

}  // namespace dynlab
