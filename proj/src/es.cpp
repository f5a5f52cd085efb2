#include "dynlab/es.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "dynlab/error.hpp"
#include "dynlab/hds.hpp"
#include "dynlab/parallel.hpp"
#include "dynlab/rng.hpp"

namespace dynlab {

void EsConfig::validate() const {
  if (population_size < 2 || population_size % 2 != 0)
    throw Error(ErrorCode::InvalidArgument, "population_size must be even and >= 2");
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be positive");
  if (generations < 0) throw Error(ErrorCode::InvalidArgument, "generations must be >= 0");
  if (trial_budget < 1 || episode_timeout < 1)
    throw Error(ErrorCode::InvalidArgument, "trial_budget and episode_timeout must be positive");
  if (eval_mazes_per_candidate < 1)
    throw Error(ErrorCode::InvalidArgument, "eval_mazes_per_candidate must be >= 1");
  if (select_every < 0 || (select_every > 0 && select_mazes < 1))
    throw Error(ErrorCode::InvalidArgument, "select_every must be >= 0 and select_mazes >= 1");
}

void to_json(nlohmann::json& j, const EsConfig& c) {
  j = nlohmann::json{{"population_size", c.population_size},
                     {"sigma", c.sigma},
                     {"learning_rate", c.learning_rate},
                     {"generations", c.generations},
                     {"trial_budget", c.trial_budget},
                     {"episode_timeout", c.episode_timeout},
                     {"episodes_per_trial", c.episodes_per_trial},
                     {"eval_mazes_per_candidate", c.eval_mazes_per_candidate},
                     {"seed", c.seed},
                     {"init_std", c.init_std},
                     {"arch", arch_name(c.arch)},
                     {"hidden_dim", c.dims.hidden},
                     {"optimizer", c.optimizer == EsOptimizer::Adam ? "adam" : "sgd"},
                     {"weight_decay", c.weight_decay},
                     {"shaped_penalty", c.shaped_penalty},
                     {"select_every", c.select_every},
                     {"select_mazes", c.select_mazes},
                     {"maze", {{"width", c.maze.width}, {"height", c.maze.height}, {"wall_prob", c.maze.wall_prob}}}};
}

void from_json(const nlohmann::json& j, EsConfig& c) {
  c = EsConfig{};
  c.population_size = j.value("population_size", c.population_size);
  c.sigma = j.value("sigma", c.sigma);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.generations = j.value("generations", c.generations);
  c.trial_budget = j.value("trial_budget", c.trial_budget);
  c.episode_timeout = j.value("episode_timeout", c.episode_timeout);
  c.episodes_per_trial = j.value("episodes_per_trial", c.episodes_per_trial);
  c.eval_mazes_per_candidate = j.value("eval_mazes_per_candidate", c.eval_mazes_per_candidate);
  c.seed = j.value("seed", c.seed);
  c.init_std = j.value("init_std", c.init_std);
  c.arch = arch_from_name(j.value("arch", std::string("gru")));
  c.dims.hidden = j.value("hidden_dim", c.dims.hidden);
  const std::string opt = j.value("optimizer", std::string(c.optimizer == EsOptimizer::Adam ? "adam" : "sgd"));
  if (opt != "sgd" && opt != "adam") throw Error(ErrorCode::InvalidArgument, "optimizer must be sgd or adam");
  c.optimizer = opt == "adam" ? EsOptimizer::Adam : EsOptimizer::Sgd;
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.shaped_penalty = j.value("shaped_penalty", c.shaped_penalty);
  c.select_every = j.value("select_every", c.select_every);
  c.select_mazes = j.value("select_mazes", c.select_mazes);
  if (j.contains("maze")) {
    const auto& m = j.at("maze");
    c.maze.width = m.value("width", c.maze.width);
    c.maze.height = m.value("height", c.maze.height);
    c.maze.wall_prob = m.value("wall_prob", c.maze.wall_prob);
  }
}

FitnessRecord evaluate_fitness(const PolicyParams& params, const MazeTask& task, const EsConfig& cfg) {
  FitnessRecord rec;
  rec.l_last = cfg.episode_timeout;
  const std::vector<int> to_goal = bfs_distances(task, task.goal);
  rec.closest_distance = to_goal[task.index(task.start)];
  struct Ending {
    int t;  // step index of the terminal event
    int length;
    bool goal;
  };
  std::vector<Ending> endings;
  JointState x{initial_state(task), Vec::Zero(params.dims.hidden)};
  for (int t = 0; t < cfg.trial_budget; ++t) {
    LoopStep step = closed_loop_step(params, task, x, cfg.episode_timeout);
    const int length = x.env.steps_in_episode + 1;
    if (step.result.event == StepEvent::GoalReached) {
      rec.l_last = length;
      rec.reached_goal = true;
      rec.successes += 1;
      rec.closest_distance = 0;
    } else {
      rec.closest_distance = std::min(rec.closest_distance, to_goal[task.index(step.result.state.position)]);
      if (step.result.event == StepEvent::Timeout) step.h_next.setZero();
    }
    x.env = step.result.state;
    x.h = std::move(step.h_next);
    if (step.result.event == StepEvent::Flow) continue;
    rec.episodes += 1;
    endings.push_back({t, length, step.result.event == StepEvent::GoalReached});
    if (cfg.episodes_per_trial > 0 && rec.episodes >= cfg.episodes_per_trial) break;
    if (step.result.event == StepEvent::Timeout && cfg.episodes_per_trial == 0) {
      // The soft reset restores the trial's initial joint state (start cell,
      // zero memory), so the remaining budget replays steps [0, period).
      const int period = t + 1;
      const int full = cfg.trial_budget / period;
      const int rest = cfg.trial_budget % period;
      rec.episodes = 0;
      rec.successes = 0;
      for (const Ending& e : endings) {
        const int reps = full + (e.t < rest ? 1 : 0);
        rec.episodes += reps;
        if (e.goal) rec.successes += reps;
      }
      // l_last already holds the latest goal of a full replay; a goal inside
      // the trailing partial replay comes later still.
      for (auto it = endings.rbegin(); it != endings.rend(); ++it)
        if (it->goal && it->t < rest) {
          rec.l_last = it->length;
          break;
        }
      break;
    }
  }
  return rec;
}

std::vector<double> centered_rank_transform(std::span<const double> fitness) {
  const std::size_t n = fitness.size();
  if (n < 2) throw Error(ErrorCode::TooFewCandidates, "rank transform needs at least 2 candidates");
  // Sort by descending fitness: the worst (largest) candidate gets rank 0.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return fitness[a] > fitness[b]; });
  std::vector<double> weights(n);
  // rank/(N-1) - 0.5 = (2 rank - (N-1)) / (2 (N-1)) with an exact integer
  // numerator: mirrored ranks get exactly negated weights.
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && fitness[order[j + 1]] == fitness[order[i]]) ++j;
    const double w = (static_cast<double>(i + j) - denom) / (2.0 * denom);
    for (std::size_t k = i; k <= j; ++k) weights[order[k]] = w;
    i = j + 1;
  }
  return weights;
}

Vec es_gradient(const Mat& noise, std::span<const double> weights, double sigma) {
  if (static_cast<std::size_t>(noise.rows()) != weights.size())
    throw Error(ErrorCode::ShapeMismatch, "es_gradient: noise rows and weights disagree");
  if (weights.empty()) throw Error(ErrorCode::ShapeMismatch, "es_gradient: empty population");
  Vec step = Vec::Zero(noise.cols());
  for (Eigen::Index i = 0; i < noise.rows(); ++i) {
    const double w = weights[static_cast<std::size_t>(i)];
    if (w != 0.0) step.noalias() += w * noise.row(i).transpose();
  }
  return step / (static_cast<double>(weights.size()) * sigma);
}

Vec es_update(const Vec& theta, const Mat& noise, std::span<const double> weights, double sigma,
              double learning_rate) {
  if (noise.cols() != theta.size())
    throw Error(ErrorCode::ShapeMismatch, "es_update: noise/theta shapes disagree");
  return theta + learning_rate * es_gradient(noise, weights, sigma);
}

Vec adam_step(const Vec& theta, const Vec& gradient, double learning_rate, AdamState& s) {
  if (s.m.size() != theta.size()) {
    s.m = Vec::Zero(theta.size());
    s.v = Vec::Zero(theta.size());
    s.t = 0;
  }
  s.t += 1;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * gradient;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * gradient.cwiseProduct(gradient);
  const double a = learning_rate * std::sqrt(1.0 - std::pow(s.beta2, s.t)) / (1.0 - std::pow(s.beta1, s.t));
  return theta + (a * s.m.array() / (s.v.array().sqrt() + s.epsilon)).matrix();
}

std::uint64_t training_maze_seed(std::uint64_t seed, int generation, int index) {
  return derive_seed(derive_seed(seed, static_cast<std::uint64_t>(generation)),
                     static_cast<std::uint64_t>(index));
}

std::uint64_t heldout_maze_seed(std::uint64_t seed, int index) {
  return derive_seed(seed ^ 0x5EED0F4E1D0A7ULL, static_cast<std::uint64_t>(index));
}

std::uint64_t validation_maze_seed(std::uint64_t seed, int index) {
  return derive_seed(seed ^ 0x7A1D47E5E1EC7ULL, static_cast<std::uint64_t>(index));
}

namespace {

struct CentreScore {
  int optimal = -1;
  double mean_l = 0.0;
  bool better_than(const CentreScore& o) const {
    return optimal != o.optimal ? optimal > o.optimal : mean_l < o.mean_l;
  }
};

CentreScore score_centre(const PolicyParams& p, const std::vector<MazeTask>& mazes, const std::vector<int>& sp,
                         const EsConfig& cfg) {
  std::vector<FitnessRecord> rec(mazes.size());
  parallel_for(mazes.size(), cfg.threads, [&](std::size_t i) { rec[i] = evaluate_fitness(p, mazes[i], cfg); });
  CentreScore s{0, 0.0};
  for (std::size_t i = 0; i < mazes.size(); ++i) {
    s.optimal += rec[i].reached_goal && rec[i].l_last == sp[i];
    s.mean_l += rec[i].l_last;
  }
  s.mean_l /= static_cast<double>(mazes.size());
  return s;
}

}  // namespace

TrainResult train(const EsConfig& cfg, const GenerationCallback& on_generation) {
  cfg.validate();
  return train_from(cfg, random_params(cfg.arch, cfg.dims, cfg.init_std, derive_seed(cfg.seed, 0xA11CEULL)),
                    on_generation);
}

TrainResult train_from(const EsConfig& cfg, PolicyParams init, const GenerationCallback& on_generation) {
  cfg.validate();
  TrainResult result{std::move(init), {}};
  Vec theta = flatten_params(result.params);
  const auto dim = theta.size();
  const int pop = cfg.population_size;
  const int half = pop / 2;
  const int n_mazes = cfg.eval_mazes_per_candidate;

  Mat noise(pop, dim);
  std::vector<double> fitness(static_cast<std::size_t>(pop));
  std::vector<int> successes(static_cast<std::size_t>(pop));
  std::vector<MazeTask> mazes(static_cast<std::size_t>(n_mazes));
  AdamState adam;

  std::vector<MazeTask> validation;
  std::vector<int> validation_sp;
  for (int i = 0; i < (cfg.select_every > 0 ? cfg.select_mazes : 0); ++i) {
    validation.push_back(generate_maze(validation_maze_seed(cfg.seed, i), cfg.maze));
    validation_sp.push_back(shortest_path_len(validation.back()));
  }
  Vec best_theta = theta;
  CentreScore best_score;
  if (!validation.empty()) best_score = score_centre(result.params, validation, validation_sp, cfg);

  for (int g = 0; g < cfg.generations; ++g) {
    Rng rng(derive_seed(cfg.seed ^ 0xE5E5ULL, static_cast<std::uint64_t>(g)));
    for (int i = 0; i < half; ++i) {
      noise.row(i) = gaussian_vector(rng, dim).transpose();
      noise.row(i + half) = -noise.row(i);
    }
    for (int m = 0; m < n_mazes; ++m)
      mazes[static_cast<std::size_t>(m)] = generate_maze(training_maze_seed(cfg.seed, g, m), cfg.maze);

    parallel_for(static_cast<std::size_t>(pop), cfg.threads, [&](std::size_t i) {
      const Vec candidate = theta + cfg.sigma * noise.row(static_cast<Eigen::Index>(i)).transpose();
      const PolicyParams p = unflatten_params(cfg.arch, cfg.dims, candidate);
      double total = 0.0;
      int ok = 0;
      for (const auto& maze : mazes) {
        const FitnessRecord r = evaluate_fitness(p, maze, cfg);
        total += r.l_last;
        if (cfg.shaped_penalty && !r.reached_goal) total += r.closest_distance;
        ok += r.reached_goal ? 1 : 0;
      }
      fitness[i] = total / n_mazes;
      successes[i] = ok;
    });

    const std::vector<double> weights = centered_rank_transform(fitness);
    if (cfg.optimizer == EsOptimizer::Sgd && cfg.weight_decay == 0.0) {
      theta = es_update(theta, noise, weights, cfg.sigma, cfg.learning_rate);
    } else {
      const Vec grad = es_gradient(noise, weights, cfg.sigma) - cfg.weight_decay * theta;
      theta = cfg.optimizer == EsOptimizer::Adam ? adam_step(theta, grad, cfg.learning_rate, adam)
                                                 : Vec(theta + cfg.learning_rate * grad);
    }

    GenerationLog row;
    row.generation = g;
    row.best_l = *std::min_element(fitness.begin(), fitness.end());
    row.mean_l = std::accumulate(fitness.begin(), fitness.end(), 0.0) / pop;
    row.success_rate = static_cast<double>(std::accumulate(successes.begin(), successes.end(), 0)) /
                       (static_cast<double>(pop) * n_mazes);
    result.log.push_back(row);
    if (on_generation) on_generation(row);

    if (!validation.empty() && ((g + 1) % cfg.select_every == 0 || g + 1 == cfg.generations)) {
      const CentreScore s = score_centre(unflatten_params(cfg.arch, cfg.dims, theta), validation, validation_sp, cfg);
      if (s.better_than(best_score)) {
        best_score = s;
        best_theta = theta;
        result.selected_generation = g;
      }
    }
  }
  if (validation.empty()) {
    best_theta = theta;
    result.selected_generation = cfg.generations - 1;
  }
  result.params = unflatten_params(cfg.arch, cfg.dims, best_theta);
  return result;
}

}  // namespace dynlab
