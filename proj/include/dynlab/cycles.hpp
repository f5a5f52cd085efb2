#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dynlab/hds.hpp"
#include "dynlab/maze.hpp"
#include "dynlab/policy.hpp"

namespace dynlab {

// A periodic observation drive extracted from a converged closed loop.
// path[t] is the agent's cell when obs_cycle[t] was observed; the final
// action of the period moves the agent onto the goal.
struct DriveSpec {
  std::vector<Observation> obs_cycle;
  std::vector<Action> target_actions;
  std::vector<Cell> path;
  Cell goal;
  std::uint64_t source_task = 0;

  int period() const { return static_cast<int>(obs_cycle.size()); }
  // Visited cells including the goal the last action lands on.
  std::vector<Cell> path_with_goal() const;
};

// states[t] is the hidden state *before* consuming obs_cycle[t]; actions[t]
// is the greedy readout of f(states[t], obs_cycle[t]).
struct LimitCycle {
  int period = 0;
  std::vector<Vec> states;
  std::vector<Action> actions;
  std::vector<Observation> observations;
  double closure_error = 0.0;
  Vec centroid;
  bool consistent = false;
  std::uint64_t source_task = 0;
};

// Smallest p dividing tokens.size() such that the sequence is a repetition
// of its first p elements.
template <typename T, typename Eq>
std::size_t minimal_period(std::span<const T> tokens, Eq eq) {
  const std::size_t n = tokens.size();
  if (n == 0) return 0;
  std::vector<std::size_t> fail(n, 0);
  for (std::size_t i = 1; i < n; ++i) {
    std::size_t k = fail[i - 1];
    while (k > 0 && !eq(tokens[i], tokens[k])) k = fail[k - 1];
    if (eq(tokens[i], tokens[k])) ++k;
    fail[i] = k;
  }
  const std::size_t p = n - fail[n - 1];
  return n % p == 0 ? p : n;
}

// Drive from the final episode of a converged trajectory (the last
// kConvergenceRepeats completed episodes reach the goal with identical
// actions). Throws NotConverged otherwise.
DriveSpec extract_drive(const Trajectory& traj);

// Applies the drive cyclically for `warmup` steps, starting at phase 0.
Vec pkd_entrain(const PolicyParams& params, const DriveSpec& drive, const Vec& h0, int warmup);

struct NotClosed {
  double closure_error = 0.0;
};
struct Inconsistent {
  LimitCycle cycle;
  std::vector<int> mismatches;
};
using CaptureResult = std::variant<LimitCycle, NotClosed, Inconsistent>;

// Runs one period from h (phase 0) and applies the closure and action
// consistency checks.
CaptureResult capture_and_check(const PolicyParams& params, const DriveSpec& drive, const Vec& h,
                                double eps_closure);

// Recomputes ||f(states[T-1], obs[T-1]) - states[0]||.
double recompute_closure(const PolicyParams& params, const LimitCycle& cycle);

Vec cycle_centroid(const LimitCycle& cycle);

inline constexpr double kDefaultClosureEps = 1e-4;
inline constexpr double kDedupTolerance = 1e-3;

struct AcfOptions {
  int warmup = 1000;  // rounded up to a whole number of periods
  double eps_closure = kDefaultClosureEps;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool deduplicate = true;
};

struct AcfResult {
  std::vector<LimitCycle> library;  // consistent cycles, deduplicated
  int n_probes = 0;
  int n_closed = 0;
  int n_consistent = 0;
  std::vector<double> closure_errors;  // every probe, probe-index order
  double fraction_closed() const { return n_probes ? static_cast<double>(n_closed) / n_probes : 0.0; }
  double fraction_consistent() const { return n_probes ? static_cast<double>(n_consistent) / n_probes : 0.0; }
};

// Probes h0 ~ N(0, I); bitwise reproducible for a given seed regardless of
// the worker count.
AcfResult acf_sample(const PolicyParams& params, const DriveSpec& drive, int n_probes, const AcfOptions& options = {});

// max over states of ||a - shift(b)||, minimized over cyclic shifts.
double cycle_distance(const LimitCycle& a, const LimitCycle& b);
std::vector<LimitCycle> deduplicate_cycles(std::vector<LimitCycle> cycles, double tolerance = kDedupTolerance);

// Converged closed-loop behaviour for one task: rollout, drive extraction
// and entrainment from the trajectory's own hidden state at the start of
// the final episode.
struct TaskCycleOptions {
  int rollout_budget = 1000;
  int warmup = 1000;
  double eps_closure = kDefaultClosureEps;
  int timeout = kDefaultEpisodeTimeout;
};

struct TaskCycle {
  DriveSpec drive;
  CaptureResult capture;
  Vec h_episode_start;  // hidden state at the start of the converged episode
  int converged_at = 0;  // step index at which the converged run completed
};

std::optional<TaskCycle> cycle_for_task(const PolicyParams& params, const MazeTask& task,
                                        const TaskCycleOptions& options = {});

void to_json(nlohmann::json& j, const DriveSpec& drive);
void from_json(const nlohmann::json& j, DriveSpec& drive);
void to_json(nlohmann::json& j, const LimitCycle& cycle);
void from_json(const nlohmann::json& j, LimitCycle& cycle);

}  // namespace dynlab
