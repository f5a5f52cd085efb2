#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dynlab/alignment.hpp"
#include "dynlab/bpf.hpp"
#include "dynlab/counterfactual.hpp"
#include "dynlab/cycles.hpp"
#include "dynlab/es.hpp"

namespace dynlab {

// Paired neural/behavior sample: the validated cycle entrained from a
// task's converged closed loop and the physical path that produced its drive.
struct Sample {
  MazeTask task;
  DriveSpec drive;
  LimitCycle cycle;
};

struct DatasetOptions {
  int n_samples = 2000;
  int max_tasks = 0;  // 0: 20 * n_samples
  std::uint64_t seed = 1;
  MazeConfig maze;
  TaskCycleOptions cycle;
  unsigned threads = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  int tasks_tried = 0;
  int tasks_converged = 0;
  int tasks_closed = 0;
};

std::uint64_t dataset_maze_seed(std::uint64_t seed, int index);

// Scans dataset_maze_seed(seed, 0, 1, ...) in index order, keeping tasks
// whose converged cycle passes closure and action consistency.
Dataset build_dataset(const PolicyParams& params, const DatasetOptions& options);

Mat centroid_matrix(std::span<const Sample> samples);
Mat behavior_matrix(std::span<const Sample> samples, const BpfConfig& cfg);

// Pseudo-manifold centroids: one per sample, built from its drive's target
// actions and the trained readout.
Mat control_centroids(std::span<const Sample> samples, const PolicyParams& params, double margin, std::uint64_t seed);

inline constexpr double kControlMargin = 0.1;

struct SweepCell {
  double radius_scale = 1.0;
  BpfMetric metric = BpfMetric::L2;
  Vec rho;
};

inline constexpr std::array<double, 4> kSweepRadiusScales{0.5, 0.75, 1.0, 1.5};

std::vector<SweepCell> bpf_sweep(std::span<const Sample> samples, const BpfConfig& base,
                                 std::span<const double> radius_scales, std::span<const BpfMetric> metrics,
                                 const CcaOptions& cca);

// Counterfactual tasks: samples whose cycle period equals the BFS shortest
// path, so that "optimal episode" is reachable by the injected behavior.
std::vector<CounterfactualTask> counterfactual_tasks(std::span<const Sample> samples, int max_tasks);

struct HeldoutReport {
  int n = 0;
  int reached = 0;
  int optimal = 0;  // final successful episode length == shortest path
  double optimal_rate() const { return n ? static_cast<double>(optimal) / n : 0.0; }
  double reach_rate() const { return n ? static_cast<double>(reached) / n : 0.0; }
};

HeldoutReport evaluate_heldout(const PolicyParams& params, const EsConfig& cfg, int n_mazes, unsigned threads = 0);

std::vector<MazeTask> heldout_tasks(const EsConfig& cfg, int n);

}  // namespace dynlab
