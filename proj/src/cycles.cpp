#include "dynlab/cycles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "dynlab/error.hpp"
#include "dynlab/parallel.hpp"
#include "dynlab/rng.hpp"

namespace dynlab {

std::vector<Cell> DriveSpec::path_with_goal() const {
  std::vector<Cell> cells = path;
  cells.push_back(goal);
  return cells;
}

namespace {

struct Token {
  const Observation* obs;
  Action action;
};

bool same_token(const Token& a, const Token& b) { return a.action == b.action && *a.obs == *b.obs; }

int round_up_to_period(int warmup, int period) {
  if (warmup <= 0) return 0;
  return ((warmup + period - 1) / period) * period;
}

}  // namespace

DriveSpec extract_drive(const Trajectory& traj) {
  if (!is_converged(traj))
    throw Error(ErrorCode::NotConverged, "trajectory does not end in a converged episode run");
  const auto spans = episode_spans(traj);
  const std::size_t first = spans.size() - static_cast<std::size_t>(kConvergenceRepeats);
  const std::size_t begin = spans[first].begin;
  const std::size_t end = spans.back().end;

  std::vector<Token> tokens;
  tokens.reserve(end - begin);
  for (std::size_t t = begin; t < end; ++t) tokens.push_back({&traj.observations[t], traj.actions[t]});
  const std::size_t period = minimal_period(std::span<const Token>(tokens), same_token);

  const EpisodeSpan& last = spans.back();
  DriveSpec drive;
  drive.source_task = traj.task_seed;
  for (std::size_t t = last.begin; t < last.begin + period; ++t) {
    drive.obs_cycle.push_back(traj.observations[t]);
    drive.target_actions.push_back(traj.actions[t]);
  }
  for (std::size_t t = last.begin; t < last.end; ++t) drive.path.push_back(traj.states[t].env.position);
  drive.goal = moved(drive.path.back(), traj.actions[last.end - 1]);
  return drive;
}

Vec pkd_entrain(const PolicyParams& params, const DriveSpec& drive, const Vec& h0, int warmup) {
  if (warmup < 0) throw Error(ErrorCode::InvalidArgument, "warmup must be >= 0");
  if (warmup > 0 && drive.obs_cycle.empty()) throw Error(ErrorCode::Empty, "empty drive");
  Vec h = h0;
  const auto period = drive.obs_cycle.size();
  for (int k = 0; k < warmup; ++k) h = recurrent_step(params, h, drive.obs_cycle[static_cast<std::size_t>(k) % period]);
  return h;
}

Vec cycle_centroid(const LimitCycle& cycle) {
  if (cycle.states.empty()) throw Error(ErrorCode::Empty, "cycle has no states");
  Vec c = Vec::Zero(cycle.states.front().size());
  for (const Vec& s : cycle.states) c += s;
  return c / static_cast<double>(cycle.states.size());
}

CaptureResult capture_and_check(const PolicyParams& params, const DriveSpec& drive, const Vec& h, double eps_closure) {
  const int period = drive.period();
  if (period == 0) throw Error(ErrorCode::Empty, "empty drive");
  if (drive.target_actions.size() != drive.obs_cycle.size())
    throw Error(ErrorCode::LengthMismatch, "drive observation/action lengths differ");
  LimitCycle cycle;
  cycle.period = period;
  cycle.observations = drive.obs_cycle;
  cycle.source_task = drive.source_task;
  Vec cur = h;
  for (int t = 0; t < period; ++t) {
    cycle.states.push_back(cur);
    cur = recurrent_step(params, cur, drive.obs_cycle[static_cast<std::size_t>(t)]);
    cycle.actions.push_back(greedy_action(params, cur));
  }
  cycle.closure_error = (cur - cycle.states.front()).norm();
  if (!(cycle.closure_error <= eps_closure)) return NotClosed{cycle.closure_error};
  cycle.centroid = cycle_centroid(cycle);
  std::vector<int> mismatches;
  for (int t = 0; t < period; ++t)
    if (cycle.actions[static_cast<std::size_t>(t)] != drive.target_actions[static_cast<std::size_t>(t)])
      mismatches.push_back(t);
  cycle.consistent = mismatches.empty();
  if (!cycle.consistent) return Inconsistent{std::move(cycle), std::move(mismatches)};
  return cycle;
}

double recompute_closure(const PolicyParams& params, const LimitCycle& cycle) {
  if (cycle.states.empty()) throw Error(ErrorCode::Empty, "cycle has no states");
  const Vec next = recurrent_step(params, cycle.states.back(), cycle.observations.back());
  return (next - cycle.states.front()).norm();
}

double cycle_distance(const LimitCycle& a, const LimitCycle& b) {
  if (a.states.size() != b.states.size() || a.states.empty()) return std::numeric_limits<double>::infinity();
  const std::size_t n = a.states.size();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t shift = 0; shift < n; ++shift) {
    double worst = 0.0;
    for (std::size_t t = 0; t < n && worst < best; ++t)
      worst = std::max(worst, (a.states[t] - b.states[(t + shift) % n]).norm());
    best = std::min(best, worst);
  }
  return best;
}

std::vector<LimitCycle> deduplicate_cycles(std::vector<LimitCycle> cycles, double tolerance) {
  std::vector<LimitCycle> kept;
  for (auto& c : cycles) {
    const bool dup = std::any_of(kept.begin(), kept.end(),
                                 [&](const LimitCycle& k) { return cycle_distance(k, c) < tolerance; });
    if (!dup) kept.push_back(std::move(c));
  }
  return kept;
}

AcfResult acf_sample(const PolicyParams& params, const DriveSpec& drive, int n_probes, const AcfOptions& options) {
  if (n_probes < 0) throw Error(ErrorCode::InvalidArgument, "probe count must be >= 0");
  AcfResult result;
  result.n_probes = n_probes;
  if (n_probes == 0) return result;
  const int warmup = round_up_to_period(options.warmup, drive.period());
  const auto n = static_cast<std::size_t>(n_probes);
  std::vector<CaptureResult> captures(n);
  parallel_for(n, options.threads, [&](std::size_t i) {
    Rng rng(derive_seed(options.seed, i));
    const Vec h0 = gaussian_vector(rng, params.dims.hidden);
    captures[i] = capture_and_check(params, drive, pkd_entrain(params, drive, h0, warmup), options.eps_closure);
  });
  std::vector<LimitCycle> consistent;
  result.closure_errors.reserve(n);
  for (auto& c : captures) {
    if (auto* lc = std::get_if<LimitCycle>(&c)) {
      ++result.n_closed;
      ++result.n_consistent;
      result.closure_errors.push_back(lc->closure_error);
      consistent.push_back(std::move(*lc));
    } else if (auto* inc = std::get_if<Inconsistent>(&c)) {
      ++result.n_closed;
      result.closure_errors.push_back(inc->cycle.closure_error);
    } else {
      result.closure_errors.push_back(std::get<NotClosed>(c).closure_error);
    }
  }
  result.library = options.deduplicate ? deduplicate_cycles(std::move(consistent)) : std::move(consistent);
  return result;
}

std::optional<TaskCycle> cycle_for_task(const PolicyParams& params, const MazeTask& task,
                                        const TaskCycleOptions& options) {
  RolloutOptions ro;
  ro.timeout = options.timeout;
  Trajectory traj = rollout(params, task, options.rollout_budget, ro);
  const auto e = first_converged_episode(traj);
  if (!e) return std::nullopt;
  const auto spans = episode_spans(traj);
  const std::size_t end = spans[*e].end;
  traj.states.resize(end);
  traj.observations.resize(end);
  traj.actions.resize(end);
  traj.events.resize(end);

  TaskCycle out;
  out.drive = extract_drive(traj);
  out.converged_at = static_cast<int>(end);
  out.h_episode_start = traj.states[spans[*e].begin].h;
  const int warmup = round_up_to_period(options.warmup, out.drive.period());
  out.capture = capture_and_check(params, out.drive, pkd_entrain(params, out.drive, out.h_episode_start, warmup),
                                  options.eps_closure);
  return out;
}

// ---- serialization --------------------------------------------------------

namespace {

std::string actions_to_string(const std::vector<Action>& actions) {
  std::string s;
  for (Action a : actions) s.push_back(action_char(a));
  return s;
}

std::vector<Action> actions_from_string(const std::string& s) {
  std::vector<Action> out;
  for (char c : s) out.push_back(action_from_char(c));
  return out;
}

nlohmann::json vec_to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec vec_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

void to_json(nlohmann::json& j, const DriveSpec& drive) {
  nlohmann::json path = nlohmann::json::array();
  for (const Cell& c : drive.path) path.push_back({c.row, c.col});
  j = nlohmann::json{{"period", drive.period()},
                     {"obs_cycle", drive.obs_cycle},
                     {"target_actions", actions_to_string(drive.target_actions)},
                     {"path", path},
                     {"goal", {drive.goal.row, drive.goal.col}},
                     {"source_task", drive.source_task}};
}

void from_json(const nlohmann::json& j, DriveSpec& drive) {
  drive.obs_cycle = j.at("obs_cycle").get<std::vector<Observation>>();
  drive.target_actions = actions_from_string(j.at("target_actions").get<std::string>());
  if (drive.obs_cycle.size() != drive.target_actions.size())
    throw Error(ErrorCode::LengthMismatch, "drive observation/action lengths differ");
  drive.path.clear();
  for (const auto& c : j.at("path")) drive.path.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
  drive.goal = {j.at("goal").at(0).get<int>(), j.at("goal").at(1).get<int>()};
  drive.source_task = j.value("source_task", std::uint64_t{0});
}

void to_json(nlohmann::json& j, const LimitCycle& cycle) {
  nlohmann::json states = nlohmann::json::array();
  for (const Vec& s : cycle.states) states.push_back(vec_to_json(s));
  j = nlohmann::json{{"period", cycle.period},
                     {"states", states},
                     {"actions", actions_to_string(cycle.actions)},
                     {"observations", cycle.observations},
                     {"closure_error", cycle.closure_error},
                     {"centroid", vec_to_json(cycle.centroid)},
                     {"consistent", cycle.consistent},
                     {"source_task", cycle.source_task}};
}

void from_json(const nlohmann::json& j, LimitCycle& cycle) {
  cycle.period = j.at("period").get<int>();
  cycle.states.clear();
  for (const auto& s : j.at("states")) cycle.states.push_back(vec_from_json(s));
  cycle.actions = actions_from_string(j.at("actions").get<std::string>());
  cycle.observations = j.at("observations").get<std::vector<Observation>>();
  if (static_cast<int>(cycle.states.size()) != cycle.period || static_cast<int>(cycle.actions.size()) != cycle.period ||
      static_cast<int>(cycle.observations.size()) != cycle.period)
    throw Error(ErrorCode::LengthMismatch, "cycle sequences do not match its period");
  cycle.closure_error = j.at("closure_error").get<double>();
  cycle.centroid = vec_from_json(j.at("centroid"));
  cycle.consistent = j.at("consistent").get<bool>();
  cycle.source_task = j.value("source_task", std::uint64_t{0});
}

}  // namespace dynlab
