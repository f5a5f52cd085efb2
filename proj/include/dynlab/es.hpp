#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dynlab/maze.hpp"
#include "dynlab/policy.hpp"

namespace dynlab {

enum class EsOptimizer { Sgd, Adam };

struct EsConfig {
  int population_size = 128;
  double sigma = 0.05;
  double learning_rate = 0.01;
  int generations = 300;
  int trial_budget = 1000;
  int episode_timeout = kDefaultEpisodeTimeout;
  int episodes_per_trial = 0;  // 0: bounded only by trial_budget
  int eval_mazes_per_candidate = 8;
  std::uint64_t seed = 1;
  double init_std = 0.1;
  Arch arch = Arch::Gru;
  PolicyDims dims;
  MazeConfig maze;
  unsigned threads = 0;
  EsOptimizer optimizer = EsOptimizer::Adam;
  double weight_decay = 0.0;
  // Non-solvers are ranked by timeout + closest BFS distance to the goal
  // reached during the trial instead of tying at the timeout penalty.
  bool shaped_penalty = true;
  // Every `select_every` generations the current centre is scored on a fixed
  // validation set of `select_mazes` mazes; training returns the best centre
  // seen (most optimal final episodes, then lowest mean L_last). 0 disables.
  int select_every = 10;
  int select_mazes = 64;

  void validate() const;
};

void to_json(nlohmann::json& j, const EsConfig& cfg);
void from_json(const nlohmann::json& j, EsConfig& cfg);

struct FitnessRecord {
  int candidate_index = 0;
  int l_last = 0;  // final successful episode length, or the timeout penalty
  bool reached_goal = false;
  int episodes = 0;
  int successes = 0;
  int closest_distance = 0;  // min BFS distance to goal over the trial
};

FitnessRecord evaluate_fitness(const PolicyParams& params, const MazeTask& task, const EsConfig& cfg);

// Population-level rank weights, lower fitness is better. Output lies in
// [-0.5, 0.5] and sums to zero; tied inputs share their mean rank.
std::vector<double> centered_rank_transform(std::span<const double> fitness);

// theta + lr / (N sigma) * sum_i w_i noise_i, accumulated in row order.
Vec es_update(const Vec& theta, const Mat& noise, std::span<const double> weights, double sigma,
              double learning_rate);

// Ascent direction 1/(N sigma) * sum_i w_i noise_i.
Vec es_gradient(const Mat& noise, std::span<const double> weights, double sigma);

struct AdamState {
  Vec m;
  Vec v;
  int t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};
Vec adam_step(const Vec& theta, const Vec& gradient, double learning_rate, AdamState& state);

struct GenerationLog {
  int generation = 0;
  double best_l = 0.0;
  double mean_l = 0.0;
  double success_rate = 0.0;
};

struct TrainResult {
  PolicyParams params;
  std::vector<GenerationLog> log;
  int selected_generation = -1;  // generation after whose update `params` was taken; -1: initialization
};

// Mazes for generation g of training; held-out evaluation uses a disjoint
// seed family (see heldout_maze_seed).
std::uint64_t training_maze_seed(std::uint64_t seed, int generation, int index);
std::uint64_t heldout_maze_seed(std::uint64_t seed, int index);
std::uint64_t validation_maze_seed(std::uint64_t seed, int index);

using GenerationCallback = std::function<void(const GenerationLog&)>;
TrainResult train(const EsConfig& cfg, const GenerationCallback& on_generation = {});
TrainResult train_from(const EsConfig& cfg, PolicyParams init, const GenerationCallback& on_generation = {});

}  // namespace dynlab
