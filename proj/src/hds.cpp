#include "dynlab/hds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dynlab/error.hpp"
#include "dynlab/parallel.hpp"
#include "dynlab/rng.hpp"

namespace dynlab {

LoopStep closed_loop_step(const PolicyParams& params, const MazeTask& task, const JointState& x, int timeout) {
  LoopStep s;
  s.obs = observe(task, x.env.position);
  s.h_next = recurrent_step(params, x.h, s.obs);
  s.action = greedy_action(params, s.h_next);
  s.result = env_step(task, x.env, s.action, timeout);
  return s;
}

Trajectory rollout(const PolicyParams& params, const MazeTask& task, int total_steps, const RolloutOptions& options) {
  if (total_steps < 1) throw Error(ErrorCode::InvalidArgument, "rollout needs total_steps >= 1");
  Trajectory traj;
  traj.task_seed = task.seed;
  const auto n = static_cast<std::size_t>(total_steps);
  traj.states.reserve(n);
  traj.observations.reserve(n);
  traj.actions.reserve(n);
  traj.events.reserve(n);
  JointState x{initial_state(task), options.h0 ? *options.h0 : Vec::Zero(params.dims.hidden)};
  for (int t = 0; t < total_steps; ++t) {
    LoopStep s = closed_loop_step(params, task, x, options.timeout);
    traj.states.push_back(x);
    traj.observations.push_back(s.obs);
    traj.actions.push_back(s.action);
    traj.events.push_back(s.result.event);
    if (s.result.event == StepEvent::Timeout && options.reset_hidden_on_timeout) s.h_next.setZero();
    x.env = s.result.state;
    x.h = std::move(s.h_next);
  }
  return traj;
}

std::vector<EpisodeSpan> episode_spans(const Trajectory& traj) {
  std::vector<EpisodeSpan> spans;
  std::size_t begin = 0;
  for (std::size_t t = 0; t < traj.size(); ++t) {
    if (traj.events[t] == StepEvent::Flow) continue;
    spans.push_back({begin, t + 1, traj.events[t]});
    begin = t + 1;
  }
  return spans;
}

bool same_actions(const Trajectory& traj, const EpisodeSpan& a, const EpisodeSpan& b) {
  if (a.length() != b.length()) return false;
  return std::equal(traj.actions.begin() + static_cast<std::ptrdiff_t>(a.begin),
                    traj.actions.begin() + static_cast<std::ptrdiff_t>(a.end),
                    traj.actions.begin() + static_cast<std::ptrdiff_t>(b.begin));
}

namespace {

bool run_qualifies(const Trajectory& traj, const std::vector<EpisodeSpan>& spans, std::size_t last, int repeats) {
  if (last + 1 < static_cast<std::size_t>(repeats)) return false;
  const std::size_t first = last + 1 - static_cast<std::size_t>(repeats);
  for (std::size_t e = first; e <= last; ++e) {
    if (spans[e].terminal != StepEvent::GoalReached) return false;
    if (e > first && !same_actions(traj, spans[first], spans[e])) return false;
  }
  return true;
}

}  // namespace

std::optional<std::size_t> first_converged_episode(const Trajectory& traj, int repeats) {
  const auto spans = episode_spans(traj);
  for (std::size_t e = 0; e < spans.size(); ++e)
    if (run_qualifies(traj, spans, e, repeats)) return e;
  return std::nullopt;
}

bool is_converged(const Trajectory& traj, int repeats) {
  const auto spans = episode_spans(traj);
  return !spans.empty() && run_qualifies(traj, spans, spans.size() - 1, repeats);
}

double ftli_from_series(std::span<const double> delta) {
  if (delta.size() < 2) throw Error(ErrorCode::InvalidArgument, "FTLI needs at least two separation samples");
  double sum = 0.0;
  for (std::size_t k = 1; k < delta.size(); ++k) sum += std::log(delta[k] / delta[0]);
  return sum / static_cast<double>(delta.size() - 1);
}

FtliRecord ftli_map(const StepMap& step, const Vec& h0, int horizon, double eps, const Vec& direction) {
  if (horizon < 2) throw Error(ErrorCode::InvalidArgument, "FTLI horizon must be >= 2");
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "FTLI eps must be positive");
  FtliRecord rec;
  rec.horizon = horizon;
  rec.eps = eps;
  rec.delta_series.reserve(static_cast<std::size_t>(horizon));
  rec.delta_series.push_back(eps);
  Vec nominal = h0;
  Vec shadow = h0 + eps * direction.normalized();
  for (int k = 0; k + 1 < horizon; ++k) {
    Vec next_nominal = step(nominal, k);
    const Vec diff = step(shadow, k) - next_nominal;
    const double sep = diff.norm();
    if (!(sep >= 1e-300) || !std::isfinite(sep))
      throw Error(ErrorCode::DegenerateSeparation, "shadow separation collapsed at step " + std::to_string(k));
    rec.delta_series.push_back(sep);
    shadow = next_nominal + (eps / sep) * diff;
    nominal = std::move(next_nominal);
  }
  rec.lambda = ftli_from_series(rec.delta_series);
  return rec;
}

ConvergedStart find_converged_start(const PolicyParams& params, const MazeTask& task, const FtliOptions& options) {
  RolloutOptions ro;
  ro.timeout = options.timeout;
  const Trajectory traj = rollout(params, task, options.warmup_budget, ro);
  if (const auto e = first_converged_episode(traj)) {
    const auto spans = episode_spans(traj);
    return {static_cast<int>(spans[*e].end), true};
  }
  return {options.warmup_budget, false};
}

FtliRecord ftli(const PolicyParams& params, const MazeTask& task, int t0, int horizon, double eps,
                const FtliOptions& options) {
  if (t0 < 0) throw Error(ErrorCode::InvalidArgument, "FTLI t0 must be >= 0");
  RolloutOptions ro;
  ro.timeout = options.timeout;
  const Trajectory traj = rollout(params, task, t0 + horizon, ro);
  Rng rng(derive_seed(options.seed, task.seed));
  const Vec dir = unit_direction(rng, params.dims.hidden);
  const StepMap step = [&](const Vec& h, int k) {
    return recurrent_step(params, h, traj.observations[static_cast<std::size_t>(t0 + k)]);
  };
  FtliRecord rec = ftli_map(step, traj.states[static_cast<std::size_t>(t0)].h, horizon, eps, dir);
  rec.t0 = t0;
  return rec;
}

FtliRecord ftli_converged(const PolicyParams& params, const MazeTask& task, int horizon, double eps,
                          const FtliOptions& options) {
  const ConvergedStart start = find_converged_start(params, task, options);
  FtliRecord rec = ftli(params, task, start.t0, horizon, eps, options);
  rec.converged = start.converged;
  return rec;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double m = values[mid];
  if (values.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

FtliSummary ftli_histogram(const PolicyParams& params, std::span<const MazeTask> tasks, int horizon, double eps,
                           const FtliOptions& options, unsigned threads) {
  FtliSummary summary;
  const std::size_t n = tasks.size();
  summary.task_seeds.resize(n);
  summary.lambdas.resize(n);
  std::vector<char> converged(n, 0);
  parallel_for(n, threads, [&](std::size_t i) {
    const FtliRecord rec = ftli_converged(params, tasks[i], horizon, eps, options);
    summary.task_seeds[i] = tasks[i].seed;
    summary.lambdas[i] = rec.lambda;
    converged[i] = rec.converged ? 1 : 0;
  });
  summary.converged.assign(converged.begin(), converged.end());
  if (n == 0) {
    summary.median = 0.0;
    summary.fraction_negative = 0.0;
    return summary;
  }
  summary.median = median(summary.lambdas);
  summary.fraction_negative =
      static_cast<double>(std::count_if(summary.lambdas.begin(), summary.lambdas.end(), [](double l) { return l < 0; })) /
      static_cast<double>(n);
  return summary;
}

namespace {

double distance_to_set(const Vec& h, const std::vector<Vec>& cycle) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec& c : cycle) best = std::min(best, (h - c).norm());
  return best;
}

}  // namespace

std::vector<RecoveryCurve> perturb_and_recover(const PolicyParams& params, const MazeTask& task, int t_star,
                                               std::span<const double> eps_list, int n_variants,
                                               const PerturbOptions& options) {
  if (t_star < 0 || options.horizon < 1 || n_variants < 0)
    throw Error(ErrorCode::InvalidArgument, "perturb_and_recover: invalid t_star/horizon/n_variants");
  RolloutOptions ro;
  ro.timeout = options.timeout;
  const Trajectory nominal = rollout(params, task, t_star + options.horizon, ro);

  const auto spans = episode_spans(nominal);
  std::optional<std::size_t> last;
  for (std::size_t e = 0; e < spans.size() && spans[e].end <= static_cast<std::size_t>(t_star); ++e) last = e;
  const auto first = first_converged_episode(nominal);
  if (!last || !first || *first > *last || spans[*last].terminal != StepEvent::GoalReached)
    throw Error(ErrorCode::NotConverged, "nominal rollout has not converged before t_star");
  std::vector<Vec> cycle;
  for (std::size_t t = spans[*last].begin; t < spans[*last].end; ++t) cycle.push_back(nominal.states[t].h);

  std::vector<RecoveryCurve> curves;
  const auto base = static_cast<std::size_t>(t_star);
  for (std::size_t ei = 0; ei < eps_list.size(); ++ei) {
    for (int v = 0; v < n_variants; ++v) {
      RecoveryCurve curve;
      curve.eps = eps_list[ei];
      curve.variant = v;
      curve.period = static_cast<int>(cycle.size());
      Rng rng(derive_seed(derive_seed(options.seed, task.seed), static_cast<std::uint64_t>(v)));
      const Vec delta = gaussian_vector(rng, params.dims.hidden);
      JointState x{nominal.states[base].env, nominal.states[base].h + curve.eps * delta};
      for (int k = 0; k < options.horizon; ++k) {
        curve.distance.push_back(distance_to_set(x.h, cycle));
        if (options.closed_loop) {
          LoopStep s = closed_loop_step(params, task, x, options.timeout);
          x.env = s.result.state;
          x.h = std::move(s.h_next);
        } else {
          x.h = recurrent_step(params, x.h, nominal.observations[base + static_cast<std::size_t>(k)]);
        }
      }
      curves.push_back(std::move(curve));
    }
  }
  return curves;
}

std::optional<int> recovery_step(const RecoveryCurve& curve, double fraction, int max_steps) {
  if (curve.distance.empty()) return std::nullopt;
  const double threshold = fraction * curve.distance.front();
  const int limit = std::min<int>(max_steps, static_cast<int>(curve.distance.size()) - 1);
  for (int k = 0; k <= limit; ++k)
    if (curve.distance[static_cast<std::size_t>(k)] < threshold) return k;
  return std::nullopt;
}

}  // namespace dynlab
