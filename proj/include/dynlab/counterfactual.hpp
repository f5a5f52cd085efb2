#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dynlab/alignment.hpp"
#include "dynlab/cycles.hpp"
#include "dynlab/maze.hpp"
#include "dynlab/policy.hpp"

namespace dynlab {

enum class Intervention { FullInjection, KeepTop, RemoveTop, ColdStart };
std::string_view intervention_name(Intervention m);
inline constexpr std::array<Intervention, 4> kAllInterventions{Intervention::ColdStart, Intervention::FullInjection,
                                                               Intervention::KeepTop, Intervention::RemoveTop};

struct InterventionSpec {
  Intervention mode = Intervention::FullInjection;
  int cutoff_k = 3;
  double noise_std = 1.0;
  std::uint64_t seed = 0;
};

// Canonical coordinates replaced with N(0, noise_std^2); KeepTop touches
// [k, k_cca), RemoveTop touches [0, k).
std::vector<bool> intervention_mask(Intervention mode, int cutoff_k, int k_cca);

Vec intervene(const CcaModel& model, const Vec& h_star, const InterventionSpec& spec);

// Closed-loop agents for trial simulation.
class TrialAgent {
 public:
  virtual ~TrialAgent() = default;
  virtual Action act(const MazeTask& task, const EnvState& state) = 0;
  virtual void on_event(StepEvent) {}
};

// Greedy recurrent policy; the hidden state is zeroed on Timeout.
class PolicyAgent : public TrialAgent {
 public:
  PolicyAgent(const PolicyParams& params, Vec h0);
  Action act(const MazeTask& task, const EnvState& state) override;
  void on_event(StepEvent e) override;
  const Vec& hidden() const { return h_; }

 private:
  const PolicyParams& params_;
  Vec h_;
};

// Follows BFS-optimal moves.
class OracleAgent : public TrialAgent {
 public:
  explicit OracleAgent(const MazeTask& task);
  Action act(const MazeTask& task, const EnvState& state) override;

 private:
  std::vector<int> dist_to_goal_;
};

class ConstantAgent : public TrialAgent {
 public:
  explicit ConstantAgent(Action a) : a_(a) {}
  Action act(const MazeTask&, const EnvState&) override { return a_; }

 private:
  Action a_;
};

struct ConvergenceResult {
  std::optional<int> t_conv;  // empty: never confirmed within the budget
  int episodes_to_optimal = 0;  // episodes completed up to and including the confirming one
  std::uint64_t task_seed = 0;
  int value_or(int sentinel) const { return t_conv ? *t_conv : sentinel; }
};

struct ConvergenceOptions {
  int trial_budget = 1000;
  int timeout = kDefaultEpisodeTimeout;
};

// t_conv is the step count at the end of the second of two consecutive
// episodes whose length equals the BFS shortest path.
ConvergenceResult convergence_time(TrialAgent& agent, const MazeTask& task, const ConvergenceOptions& options = {});
ConvergenceResult convergence_time(const PolicyParams& params, const MazeTask& task, const Vec& h_init,
                                   const ConvergenceOptions& options = {});

struct CounterfactualTask {
  MazeTask task;
  LimitCycle cycle;  // validated cycle whose drive came from this task
};

struct CounterfactualOptions {
  int cutoff_k = 3;
  double noise_std = 1.0;
  std::uint64_t seed = 0;
  ConvergenceOptions convergence;
  unsigned threads = 0;
};

struct CounterfactualRow {
  std::uint64_t task_seed = 0;
  int shortest_path = 0;
  Intervention mode = Intervention::ColdStart;
  ConvergenceResult result;
};

struct CounterfactualSummary {
  std::vector<CounterfactualRow> rows;  // task-major, kAllInterventions order
  std::array<double, 4> median{};  // by kAllInterventions index; sentinel = trial budget
  int n_tasks = 0;
  double median_of(Intervention m) const;
};

// Injected state is the cycle's phase-0 state (the hidden state that opens
// the converged episode); it becomes h_0 before the first observation.
CounterfactualSummary counterfactual_suite(const PolicyParams& params, const CcaModel& model,
                                           std::span<const CounterfactualTask> tasks,
                                           const CounterfactualOptions& options = {});

}  // namespace dynlab
