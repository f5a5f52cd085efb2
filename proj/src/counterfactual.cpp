#include "dynlab/counterfactual.hpp"

#include "dynlab/error.hpp"
#include "dynlab/hds.hpp"
#include "dynlab/parallel.hpp"
#include "dynlab/rng.hpp"

namespace dynlab {

std::string_view intervention_name(Intervention m) {
  switch (m) {
    case Intervention::FullInjection: return "full_injection";
    case Intervention::KeepTop: return "keep_top";
    case Intervention::RemoveTop: return "remove_top";
    case Intervention::ColdStart: return "cold_start";
  }
  return "unknown";
}

std::vector<bool> intervention_mask(Intervention mode, int cutoff_k, int k_cca) {
  if (cutoff_k < 0 || cutoff_k > k_cca) throw Error(ErrorCode::InvalidArgument, "cutoff_k must lie in [0, k_cca]");
  std::vector<bool> mask(static_cast<std::size_t>(k_cca), false);
  for (int i = 0; i < k_cca; ++i) {
    if (mode == Intervention::KeepTop) mask[static_cast<std::size_t>(i)] = i >= cutoff_k;
    if (mode == Intervention::RemoveTop) mask[static_cast<std::size_t>(i)] = i < cutoff_k;
  }
  return mask;
}

Vec intervene(const CcaModel& model, const Vec& h_star, const InterventionSpec& spec) {
  if (spec.mode == Intervention::ColdStart) return Vec::Zero(h_star.size());
  Vec z = cca_project(model, Side::Neural, h_star);
  const auto mask = intervention_mask(spec.mode, spec.cutoff_k, model.k_cca());
  Rng rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.noise_std);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) z[static_cast<Eigen::Index>(i)] = noise(rng);
  return cca_inverse(model, Side::Neural, z);
}

PolicyAgent::PolicyAgent(const PolicyParams& params, Vec h0) : params_(params), h_(std::move(h0)) {
  if (h_.size() != params.dims.hidden) throw Error(ErrorCode::DimensionMismatch, "initial hidden state size mismatch");
}

Action PolicyAgent::act(const MazeTask& task, const EnvState& state) {
  h_ = recurrent_step(params_, h_, observe(task, state.position));
  return greedy_action(params_, h_);
}

void PolicyAgent::on_event(StepEvent e) {
  if (e == StepEvent::Timeout) h_.setZero();
}

OracleAgent::OracleAgent(const MazeTask& task) : dist_to_goal_(bfs_distances(task, task.goal)) {}

Action OracleAgent::act(const MazeTask& task, const EnvState& state) {
  const int here = dist_to_goal_[task.index(state.position)];
  for (Action a : kAllActions) {
    const Cell next = moved(state.position, a);
    if (task.is_free(next) && dist_to_goal_[task.index(next)] == here - 1) return a;
  }
  return Action::Up;
}

ConvergenceResult convergence_time(TrialAgent& agent, const MazeTask& task, const ConvergenceOptions& options) {
  const int optimal = shortest_path_len(task);
  ConvergenceResult out;
  out.task_seed = task.seed;
  EnvState s = initial_state(task);
  int episode_len = 0;
  int episodes = 0;
  bool previous_optimal = false;
  for (int t = 1; t <= options.trial_budget; ++t) {
    const StepResult r = env_step(task, s, agent.act(task, s), options.timeout);
    agent.on_event(r.event);
    s = r.state;
    ++episode_len;
    if (r.event == StepEvent::Flow) continue;
    ++episodes;
    const bool is_optimal = r.event == StepEvent::GoalReached && episode_len == optimal;
    if (is_optimal && previous_optimal) {
      out.t_conv = t;
      out.episodes_to_optimal = episodes;
      return out;
    }
    previous_optimal = is_optimal;
    episode_len = 0;
  }
  out.episodes_to_optimal = episodes;
  return out;
}

ConvergenceResult convergence_time(const PolicyParams& params, const MazeTask& task, const Vec& h_init,
                                   const ConvergenceOptions& options) {
  PolicyAgent agent(params, h_init);
  return convergence_time(agent, task, options);
}

double CounterfactualSummary::median_of(Intervention m) const {
  for (std::size_t i = 0; i < kAllInterventions.size(); ++i)
    if (kAllInterventions[i] == m) return median[i];
  return 0.0;
}

CounterfactualSummary counterfactual_suite(const PolicyParams& params, const CcaModel& model,
                                           std::span<const CounterfactualTask> tasks,
                                           const CounterfactualOptions& options) {
  const std::size_t n_modes = kAllInterventions.size();
  CounterfactualSummary summary;
  summary.n_tasks = static_cast<int>(tasks.size());
  summary.rows.resize(tasks.size() * n_modes);
  parallel_for(tasks.size(), options.threads, [&](std::size_t i) {
    const CounterfactualTask& ct = tasks[i];
    if (ct.cycle.states.empty()) throw Error(ErrorCode::Empty, "counterfactual task without a cycle");
    const int sp = shortest_path_len(ct.task);
    for (std::size_t m = 0; m < n_modes; ++m) {
      InterventionSpec spec;
      spec.mode = kAllInterventions[m];
      spec.cutoff_k = options.cutoff_k;
      spec.noise_std = options.noise_std;
      spec.seed = derive_seed(options.seed, ct.task.seed);  // shared across conditions for paired draws
      const Vec h0 = intervene(model, ct.cycle.states.front(), spec);
      summary.rows[i * n_modes + m] = {ct.task.seed, sp, spec.mode, convergence_time(params, ct.task, h0, options.convergence)};
    }
  });
  for (std::size_t m = 0; m < n_modes; ++m) {
    std::vector<double> values;
    for (std::size_t i = 0; i < tasks.size(); ++i)
      values.push_back(summary.rows[i * n_modes + m].result.value_or(options.convergence.trial_budget));
    summary.median[m] = values.empty() ? 0.0 : median(values);
  }
  return summary;
}

}  // namespace dynlab
