#include "dynlab/pipeline.hpp"

#include "dynlab/error.hpp"
#include "dynlab/parallel.hpp"
#include "dynlab/rng.hpp"

namespace dynlab {

std::uint64_t dataset_maze_seed(std::uint64_t seed, int index) {
  return derive_seed(seed ^ 0xDA7A5E7ULL, static_cast<std::uint64_t>(index));
}

Dataset build_dataset(const PolicyParams& params, const DatasetOptions& options) {
  if (options.n_samples < 0) throw Error(ErrorCode::InvalidArgument, "n_samples must be >= 0");
  const int max_tasks = options.max_tasks > 0 ? options.max_tasks : 20 * std::max(options.n_samples, 1);
  Dataset ds;
  constexpr int kChunk = 64;
  while (static_cast<int>(ds.samples.size()) < options.n_samples && ds.tasks_tried < max_tasks) {
    const int chunk = std::min(kChunk, max_tasks - ds.tasks_tried);
    std::vector<std::optional<Sample>> found(static_cast<std::size_t>(chunk));
    std::vector<char> converged(static_cast<std::size_t>(chunk), 0), closed(static_cast<std::size_t>(chunk), 0);
    parallel_for(static_cast<std::size_t>(chunk), options.threads, [&](std::size_t i) {
      const MazeTask task = generate_maze(dataset_maze_seed(options.seed, ds.tasks_tried + static_cast<int>(i)), options.maze);
      auto tc = cycle_for_task(params, task, options.cycle);
      if (!tc) return;
      converged[i] = 1;
      if (std::holds_alternative<NotClosed>(tc->capture)) return;
      closed[i] = 1;
      if (auto* lc = std::get_if<LimitCycle>(&tc->capture)) found[i] = Sample{task, std::move(tc->drive), std::move(*lc)};
    });
    for (int i = 0; i < chunk; ++i) {
      ++ds.tasks_tried;
      ds.tasks_converged += converged[static_cast<std::size_t>(i)];
      ds.tasks_closed += closed[static_cast<std::size_t>(i)];
      auto& f = found[static_cast<std::size_t>(i)];
      if (f && static_cast<int>(ds.samples.size()) < options.n_samples) ds.samples.push_back(std::move(*f));
      if (static_cast<int>(ds.samples.size()) >= options.n_samples) break;
    }
  }
  return ds;
}

Mat centroid_matrix(std::span<const Sample> samples) {
  if (samples.empty()) return {};
  Mat m(static_cast<Eigen::Index>(samples.size()), samples.front().cycle.centroid.size());
  for (std::size_t i = 0; i < samples.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = samples[i].cycle.centroid.transpose();
  return m;
}

Mat behavior_matrix(std::span<const Sample> samples, const BpfConfig& cfg) {
  Mat m(static_cast<Eigen::Index>(samples.size()), cfg.grid_h * cfg.grid_w);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto cells = samples[i].drive.path_with_goal();
    m.row(static_cast<Eigen::Index>(i)) = build_bpf_cells(cells, cfg).flat().transpose();
  }
  return m;
}

Mat control_centroids(std::span<const Sample> samples, const PolicyParams& params, double margin, std::uint64_t seed) {
  Mat m(static_cast<Eigen::Index>(samples.size()), params.dims.hidden);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto states = pseudo_manifold(samples[i].drive.target_actions, params.w_out, params.b_out, params.dims.hidden,
                                        margin, derive_seed(seed, i));
    Vec c = Vec::Zero(params.dims.hidden);
    for (const Vec& s : states) c += s;
    m.row(static_cast<Eigen::Index>(i)) = (c / static_cast<double>(states.size())).transpose();
  }
  return m;
}

std::vector<SweepCell> bpf_sweep(std::span<const Sample> samples, const BpfConfig& base,
                                 std::span<const double> radius_scales, std::span<const BpfMetric> metrics,
                                 const CcaOptions& cca) {
  const Mat x = centroid_matrix(samples);
  std::vector<SweepCell> out;
  for (double scale : radius_scales) {
    for (BpfMetric metric : metrics) {
      BpfConfig cfg = base;
      cfg.r_eff = base.r_eff * scale;
      cfg.metric = metric;
      out.push_back({scale, metric, cca_fit(x, behavior_matrix(samples, cfg), cca).rho});
    }
  }
  return out;
}

std::vector<CounterfactualTask> counterfactual_tasks(std::span<const Sample> samples, int max_tasks) {
  std::vector<CounterfactualTask> out;
  for (const Sample& s : samples) {
    if (static_cast<int>(out.size()) >= max_tasks) break;
    if (s.cycle.period == shortest_path_len(s.task)) out.push_back({s.task, s.cycle});
  }
  return out;
}

std::vector<MazeTask> heldout_tasks(const EsConfig& cfg, int n) {
  std::vector<MazeTask> tasks;
  for (int i = 0; i < n; ++i) tasks.push_back(generate_maze(heldout_maze_seed(cfg.seed, i), cfg.maze));
  return tasks;
}

HeldoutReport evaluate_heldout(const PolicyParams& params, const EsConfig& cfg, int n_mazes, unsigned threads) {
  const auto tasks = heldout_tasks(cfg, n_mazes);
  std::vector<FitnessRecord> recs(tasks.size());
  parallel_for(tasks.size(), threads, [&](std::size_t i) { recs[i] = evaluate_fitness(params, tasks[i], cfg); });
  HeldoutReport r;
  r.n = n_mazes;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    r.reached += recs[i].reached_goal;
    r.optimal += recs[i].reached_goal && recs[i].l_last == shortest_path_len(tasks[i]);
  }
  return r;
}

}  // namespace dynlab
