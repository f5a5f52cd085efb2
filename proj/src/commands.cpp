#include "dynlab/commands.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <numeric>

#include <nlohmann/json.hpp>

#include "dynlab/error.hpp"
#include "dynlab/plot.hpp"
#include "dynlab/rng.hpp"

namespace fs = std::filesystem;

namespace dynlab {

namespace {

void note(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

std::string pad5(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", i);
  return buf;
}

}  // namespace

TrainResult cmd_train(const EsConfig& cfg, const fs::path& ckpt_dir, const fs::path& log_csv, RunManifest& manifest,
                      const fs::path& root, const Log& log) {
  TrainResult res = train(cfg, [&](const GenerationLog& g) {
    if (log && (g.generation % 10 == 0 || g.generation + 1 == cfg.generations)) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "gen %d best_L %.2f mean_L %.2f success %.3f", g.generation, g.best_l, g.mean_l,
                    g.success_rate);
      log(buf);
    }
  });
  save_checkpoint(res.params, ckpt_dir);
  CsvTable csv({"generation", "best_L", "mean_L", "success_rate"});
  for (const auto& g : res.log) csv.row().add(g.generation).add(g.best_l).add(g.mean_l).add(g.success_rate);
  csv.save(log_csv);
  manifest.add_artifact(root, ckpt_dir / "policy.json");
  manifest.add_artifact(root, ckpt_dir / "policy.bin");
  manifest.add_artifact(root, log_csv);
  return res;
}

std::vector<MazeTask> cmd_gen_mazes(std::uint64_t seed, int n, const MazeConfig& maze, const fs::path& out,
                                    RunManifest& manifest, const fs::path& root) {
  if (n < 0) throw Error(ErrorCode::InvalidArgument, "maze count must be >= 0");
  std::vector<MazeTask> tasks;
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < n; ++i) {
    tasks.push_back(generate_maze(derive_seed(seed, static_cast<std::uint64_t>(i)), maze));
    nlohmann::json m = tasks.back();
    m["shortest_path"] = shortest_path_len(tasks.back());
    arr.push_back(m);
  }
  write_json(out, {{"schema", "dynlab.mazes.v1"}, {"mazes", arr}});
  manifest.add_artifact(root, out);
  return tasks;
}

FtliRun cmd_ftli(const PolicyParams& trained, const EsConfig& es, const FtliConfig& cfg, unsigned threads,
                 const fs::path& out, RunManifest& manifest, const fs::path& root) {
  const auto tasks = heldout_tasks(es, cfg.n_tasks);
  FtliOptions fo;
  fo.timeout = es.episode_timeout;
  fo.warmup_budget = cfg.warmup_budget;
  fo.seed = derive_seed(es.seed, 0xF71);
  const PolicyParams rnd = random_params(es.arch, es.dims, cfg.random_std, derive_seed(es.seed, 0xBA5E));
  FtliRun run;
  run.trained = ftli_histogram(trained, tasks, cfg.horizon, cfg.eps, fo, threads);
  run.random = ftli_histogram(rnd, tasks, cfg.horizon, cfg.eps, fo, threads);
  CsvTable csv({"task_seed", "lambda", "converged", "policy"});
  for (const auto* s : {&run.trained, &run.random}) {
    const std::string name = s == &run.trained ? "trained" : "random";
    for (std::size_t i = 0; i < s->lambdas.size(); ++i)
      csv.row().add(s->task_seeds[i]).add(s->lambdas[i]).add(s->converged[i] ? 1 : 0).add(name);
  }
  csv.save(out);
  manifest.add_artifact(root, out);
  return run;
}

std::vector<RecoveryCurve> cmd_perturb(const PolicyParams& params, const EsConfig& es, const PerturbConfig& cfg,
                                       const fs::path& out, RunManifest& manifest, const fs::path& root) {
  std::vector<RecoveryCurve> all;
  std::vector<std::uint64_t> seeds;
  FtliOptions fo;
  fo.timeout = es.episode_timeout;
  PerturbOptions po;
  po.timeout = es.episode_timeout;
  po.horizon = cfg.horizon;
  po.closed_loop = cfg.closed_loop;
  po.seed = derive_seed(es.seed, 0x9E27);
  int found = 0;
  for (int i = 0; found < cfg.n_tasks && i < 50 * std::max(cfg.n_tasks, 1); ++i) {
    const MazeTask task = generate_maze(heldout_maze_seed(es.seed, i), es.maze);
    const ConvergedStart start = find_converged_start(params, task, fo);
    if (!start.converged) continue;
    auto curves = perturb_and_recover(params, task, start.t0, cfg.eps, cfg.variants, po);
    for (auto& c : curves) {
      all.push_back(std::move(c));
      seeds.push_back(task.seed);
    }
    ++found;
  }
  CsvTable csv({"task_seed", "eps", "variant", "period", "step", "distance"});
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t k = 0; k < all[i].distance.size(); ++k)
      csv.row().add(seeds[i]).add(all[i].eps).add(all[i].variant).add(all[i].period).add(static_cast<int>(k)).add(all[i].distance[k]);
  csv.save(out);
  manifest.add_artifact(root, out);
  return all;
}

std::string sample_id(const Sample& s) { return std::to_string(s.task.seed); }

PolicyParams with_random_readout(const PolicyParams& params, double stddev, std::uint64_t seed) {
  const PolicyParams rnd = random_params(params.arch, params.dims, stddev, seed);
  PolicyParams out = params;
  out.w_out = rnd.w_out;
  out.b_out = rnd.b_out;
  return out;
}

void save_dataset(const Dataset& ds, const fs::path& dir, RunManifest& manifest, const fs::path& root) {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    const std::string file = "cycle_" + pad5(i) + ".json";
    write_file(dir / file, nlohmann::json{{"task", s.task}, {"drive", s.drive}, {"cycle", s.cycle}}.dump());
    manifest.add_artifact(root, dir / file);
    entries.push_back({{"file", file},
                       {"id", sample_id(s)},
                       {"period", s.cycle.period},
                       {"closure_error", s.cycle.closure_error},
                       {"shortest_path", shortest_path_len(s.task)}});
  }
  write_json(dir / "index.json", {{"schema", "dynlab.cycles.v1"},
                                  {"kind", "dataset"},
                                  {"tasks_tried", ds.tasks_tried},
                                  {"tasks_converged", ds.tasks_converged},
                                  {"tasks_closed", ds.tasks_closed},
                                  {"entries", entries}});
  manifest.add_artifact(root, dir / "index.json");
}

std::vector<Sample> load_dataset(const fs::path& dir) {
  const auto index = read_json(dir / "index.json");
  if (index.value("schema", std::string()) != "dynlab.cycles.v1" || index.value("kind", std::string()) != "dataset")
    throw Error(ErrorCode::SchemaMismatch, dir.string() + " is not a dataset cycle directory");
  std::vector<Sample> out;
  for (const auto& e : index.at("entries")) {
    const auto j = read_json(dir / e.at("file").get<std::string>());
    out.push_back({j.at("task").get<MazeTask>(), j.at("drive").get<DriveSpec>(), j.at("cycle").get<LimitCycle>()});
  }
  return out;
}

void save_acf(const AcfResult& acf, const fs::path& dir, RunManifest& manifest, const fs::path& root) {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < acf.library.size(); ++i) {
    const std::string file = "library/cycle_" + pad5(i) + ".json";
    write_file(dir / file, nlohmann::json(acf.library[i]).dump());
    manifest.add_artifact(root, dir / file);
    entries.push_back({{"file", file}, {"period", acf.library[i].period}, {"closure_error", acf.library[i].closure_error}});
  }
  write_json(dir / "index.json", {{"schema", "dynlab.cycles.v1"},
                                  {"kind", "acf"},
                                  {"n_probes", acf.n_probes},
                                  {"n_closed", acf.n_closed},
                                  {"n_consistent", acf.n_consistent},
                                  {"fraction_closed", acf.fraction_closed()},
                                  {"fraction_consistent", acf.fraction_consistent()},
                                  {"entries", entries}});
  manifest.add_artifact(root, dir / "index.json");
}

void save_spectrum(const std::vector<SpectrumRecord>& spec, const fs::path& out, RunManifest& manifest,
                   const fs::path& root) {
  CsvTable csv({"step", "max_real", "spectral_radius", "n_eigs"});
  for (const auto& r : spec)
    csv.row().add(r.step_index).add(r.max_real).add(r.spectral_radius).add(static_cast<int>(r.eigenvalues.size()));
  csv.save(out);
  manifest.add_artifact(root, out);
}

void save_fields(const std::vector<BehavioralField>& fields, const std::vector<std::string>& ids, const fs::path& dir,
                 RunManifest& manifest, const fs::path& root) {
  if (fields.size() != ids.size()) throw Error(ErrorCode::LengthMismatch, "field/id count mismatch");
  const BpfConfig cfg = fields.empty() ? BpfConfig{} : fields.front().config;
  std::string bytes;
  bytes.reserve(fields.size() * static_cast<std::size_t>(cfg.grid_h * cfg.grid_w) * sizeof(float));
  for (const auto& f : fields) {
    if (!(f.config == cfg)) throw Error(ErrorCode::ConfigMismatch, "fields built with different configurations");
    for (Eigen::Index i = 0; i < f.values.size(); ++i) {
      const float v = static_cast<float>(f.values.data()[i]);
      char b[sizeof(float)];
      std::memcpy(b, &v, sizeof v);
      bytes.append(b, sizeof b);
    }
  }
  write_file(dir / "fields.bin", bytes);
  write_json(dir / "index.json", {{"schema", "dynlab.fields.v1"},
                                  {"config", cfg},
                                  {"count", fields.size()},
                                  {"dtype", "f32le"},
                                  {"layout", "sample-major, row-major grid"},
                                  {"file", "fields.bin"},
                                  {"ids", ids}});
  manifest.add_artifact(root, dir / "fields.bin");
  manifest.add_artifact(root, dir / "index.json");
}

LoadedFields load_fields(const fs::path& dir) {
  const auto index = read_json(dir / "index.json");
  if (index.value("schema", std::string()) != "dynlab.fields.v1" || index.value("dtype", std::string()) != "f32le")
    throw Error(ErrorCode::SchemaMismatch, dir.string() + " is not a dynlab.fields.v1 directory");
  LoadedFields out;
  out.config = index.at("config").get<BpfConfig>();
  out.ids = index.at("ids").get<std::vector<std::string>>();
  const std::string bytes = read_file(dir / index.at("file").get<std::string>());
  const auto cells = static_cast<std::size_t>(out.config.grid_h * out.config.grid_w);
  if (bytes.size() != out.ids.size() * cells * sizeof(float))
    throw Error(ErrorCode::SchemaMismatch, "fields.bin size does not match its header");
  out.rows.resize(static_cast<Eigen::Index>(out.ids.size()), static_cast<Eigen::Index>(cells));
  for (std::size_t i = 0; i < out.ids.size(); ++i)
    for (std::size_t c = 0; c < cells; ++c) {
      float v;
      std::memcpy(&v, bytes.data() + (i * cells + c) * sizeof(float), sizeof v);
      out.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v;
    }
  return out;
}

void save_paths(const std::vector<NamedPath>& paths, const fs::path& out, RunManifest& manifest, const fs::path& root) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : paths) {
    nlohmann::json cells = nlohmann::json::array();
    for (Cell c : p.cells) cells.push_back({c.row, c.col});
    arr.push_back({{"id", p.id}, {"cells", cells}});
  }
  write_file(out, nlohmann::json{{"schema", "dynlab.paths.v1"}, {"paths", arr}}.dump() + "\n");
  manifest.add_artifact(root, out);
}

std::vector<NamedPath> load_paths(const fs::path& path) {
  const auto j = read_json(path);
  if (j.value("schema", std::string()) != "dynlab.paths.v1")
    throw Error(ErrorCode::SchemaMismatch, path.string() + " is not a dynlab.paths.v1 document");
  std::vector<NamedPath> out;
  for (const auto& p : j.at("paths")) {
    NamedPath np;
    np.id = p.at("id").get<std::string>();
    for (const auto& c : p.at("cells")) np.cells.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
    out.push_back(std::move(np));
  }
  return out;
}

std::vector<NamedPath> dataset_paths(std::span<const Sample> samples) {
  std::vector<NamedPath> out;
  for (const Sample& s : samples) out.push_back({sample_id(s), s.drive.path_with_goal()});
  return out;
}

std::vector<BehavioralField> build_fields(const std::vector<NamedPath>& paths, const BpfConfig& cfg) {
  std::vector<BehavioralField> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(build_bpf_cells(p.cells, cfg));
  return out;
}

void save_rho_csv(const std::vector<std::pair<std::string, Vec>>& spectra, const fs::path& out, RunManifest& manifest,
                  const fs::path& root) {
  CsvTable csv({"series", "mode", "rho"});
  for (const auto& [name, rho] : spectra)
    for (Eigen::Index i = 0; i < rho.size(); ++i) csv.row().add(name).add(static_cast<int>(i + 1)).add(rho[i]);
  csv.save(out);
  manifest.add_artifact(root, out);
}

void save_counterfactual(const CounterfactualSummary& s, const fs::path& csv_path, const fs::path& summary_json,
                         RunManifest& manifest, const fs::path& root) {
  CsvTable csv({"task_seed", "shortest_path", "condition", "t_conv", "converged", "episodes"});
  for (const auto& r : s.rows)
    csv.row()
        .add(r.task_seed)
        .add(r.shortest_path)
        .add(std::string(intervention_name(r.mode)))
        .add(r.result.t_conv.value_or(-1))
        .add(r.result.t_conv ? 1 : 0)
        .add(r.result.episodes_to_optimal);
  csv.save(csv_path);
  nlohmann::json med;
  for (std::size_t m = 0; m < kAllInterventions.size(); ++m) med[std::string(intervention_name(kAllInterventions[m]))] = s.median[m];
  write_json(summary_json, {{"n_tasks", s.n_tasks}, {"median_t_conv", med}, {"sentinel", "trial_budget"}});
  manifest.add_artifact(root, csv_path);
  manifest.add_artifact(root, summary_json);
}

// ---- repro ---------------------------------------------------------------

namespace {

class Stopwatch {
 public:
  explicit Stopwatch(RunManifest& m, std::string name) : m_(m), name_(std::move(name)) {}
  ~Stopwatch() {
    m_.timings[name_] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  RunManifest& m_;
  std::string name_;
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

Series curve_series(const std::string& name, const Vec& rho) {
  Series s{name, {}, {}};
  for (Eigen::Index i = 0; i < rho.size(); ++i) {
    s.x.push_back(static_cast<double>(i + 1));
    s.y.push_back(rho[i]);
  }
  return s;
}

void save_plot(const fs::path& path, PlotKind kind, const std::vector<Series>& data, const PlotStyle& style,
               RunManifest& manifest, const fs::path& root) {
  write_file(path, emit_plot(kind, data, style));
  manifest.add_artifact(root, path);
}

}  // namespace

RunManifest run_repro(const ExperimentConfig& cfg, const fs::path& out, const ReproOptions& options) {
  cfg.validate();
  const Log& log = options.log;
  fs::create_directories(out);
  RunManifest manifest;
  manifest.command = "repro";
  manifest.config_hash = json_hash(nlohmann::json(cfg));
  write_json(out / "config.json", cfg);
  manifest.add_artifact(out, out / "config.json");
  EsConfig es = cfg.es;
  es.threads = options.threads;

  PolicyParams params;
  {
    Stopwatch sw(manifest, "train");
    if (cfg.checkpoint) {
      note(log, "loading checkpoint " + cfg.checkpoint->string());
      params = load_checkpoint(*cfg.checkpoint);
      save_checkpoint(params, out / "ckpt");
      manifest.add_artifact(out, out / "ckpt/policy.json");
      manifest.add_artifact(out, out / "ckpt/policy.bin");
    } else {
      note(log, "training");
      params = cmd_train(es, out / "ckpt", out / "train_log.csv", manifest, out, log).params;
    }
  }
  {
    Stopwatch sw(manifest, "heldout");
    const HeldoutReport trained = evaluate_heldout(params, es, 100, options.threads);
    const PolicyParams rnd = random_params(es.arch, es.dims, es.init_std, derive_seed(es.seed, 0xBA5E));
    const HeldoutReport random = evaluate_heldout(rnd, es, 100, options.threads);
    write_json(out / "heldout.json", {{"n", trained.n},
                                      {"trained", {{"reached", trained.reached}, {"optimal", trained.optimal}}},
                                      {"random", {{"reached", random.reached}, {"optimal", random.optimal}}}});
    manifest.add_artifact(out, out / "heldout.json");
  }
  FtliRun ftli_run;
  {
    Stopwatch sw(manifest, "ftli");
    note(log, "ftli");
    ftli_run = cmd_ftli(params, es, cfg.ftli, options.threads, out / "ftli.csv", manifest, out);
  }
  std::vector<RecoveryCurve> curves;
  {
    Stopwatch sw(manifest, "perturb");
    note(log, "perturbation recovery");
    curves = cmd_perturb(params, es, cfg.perturb, out / "recover.csv", manifest, out);
  }
  Dataset ds;
  {
    Stopwatch sw(manifest, "dataset");
    note(log, "building cycle dataset");
    DatasetOptions dopt;
    dopt.n_samples = cfg.cca.n_samples;
    dopt.seed = cfg.seed;
    dopt.maze = es.maze;
    dopt.cycle.timeout = es.episode_timeout;
    dopt.cycle.warmup = cfg.acf.warmup;
    dopt.cycle.eps_closure = cfg.acf.eps_closure;
    dopt.threads = options.threads;
    ds = build_dataset(params, dopt);
    save_dataset(ds, out / "cycles", manifest, out);
    if (static_cast<int>(ds.samples.size()) < 3) throw Error(ErrorCode::Empty, "too few validated cycles for alignment");
  }
  {
    Stopwatch sw(manifest, "acf");
    note(log, "action-consistency filter");
    AcfOptions aopt;
    aopt.warmup = cfg.acf.warmup;
    aopt.eps_closure = cfg.acf.eps_closure;
    aopt.seed = derive_seed(cfg.seed, 0xACF);
    aopt.threads = options.threads;
    const AcfResult acf = acf_sample(params, ds.samples.front().drive, cfg.acf.n_probes, aopt);
    save_acf(acf, out / "acf", manifest, out);
    const PolicyParams ghost = with_random_readout(params, 1.0, derive_seed(cfg.seed, 0x6057));
    save_acf(acf_sample(ghost, ds.samples.front().drive, cfg.acf.n_probes, aopt), out / "acf_ghost", manifest, out);
    const auto spec = cycle_spectrum(params, ds.samples.front().cycle, SpectrumMode::DiscreteMap);
    save_spectrum(spec, out / "spectrum.csv", manifest, out);
    const auto& c = ds.samples.front().cycle;
    StroboscopicOptions so;
    so.seed = derive_seed(cfg.seed, 0x5707);
    const ContractionEstimate ce = stroboscopic_check(params, c.observations, c.states.front(), so);
    write_json(out / "stroboscopic.json", {{"period", ce.period},
                                           {"per_step_lipschitz", ce.per_step_lipschitz},
                                           {"product_bound", ce.product_bound},
                                           {"fixed_point_residual", ce.fixed_point_residual}});
    manifest.add_artifact(out, out / "stroboscopic.json");
  }
  const auto paths = dataset_paths(ds.samples);
  Mat behavior;
  {
    Stopwatch sw(manifest, "bpf");
    note(log, "behavioral fields");
    save_paths(paths, out / "trajs.json", manifest, out);
    std::vector<std::string> ids;
    for (const auto& p : paths) ids.push_back(p.id);
    save_fields(build_fields(paths, cfg.bpf), ids, out / "fields", manifest, out);
    behavior = load_fields(out / "fields").rows;
  }
  const Mat centroids = centroid_matrix(ds.samples);
  CcaModel model;
  {
    Stopwatch sw(manifest, "cca");
    note(log, "cca");
    model = cca_fit(centroids, behavior, cfg.cca.options);
    write_json(out / "cca_model.json", model);
    manifest.add_artifact(out, out / "cca_model.json");
    const double r = rsa_pearson(pairwise_distances(centroids), pairwise_distances(behavior));
    std::vector<int> perm(static_cast<std::size_t>(centroids.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(cfg.seed, 0x25A));
    std::shuffle(perm.begin(), perm.end(), rng);
    const double r_null = rsa_pearson(permuted(pairwise_distances(centroids), perm), pairwise_distances(behavior));
    write_json(out / "rsa.json", {{"pearson_r", r}, {"shuffled_r", r_null}, {"n", centroids.rows()}});
    manifest.add_artifact(out, out / "rsa.json");
  }
  ControlResult control;
  {
    Stopwatch sw(manifest, "control");
    note(log, "action-constrained control");
    const Mat ctrl = control_centroids(ds.samples, params, cfg.cca.control_margin, derive_seed(cfg.seed, 0xC7));
    control = control_experiment(centroids, ctrl, behavior, cfg.cca.options);
    save_rho_csv({{"trained", control.trained_rho}, {"control", control.control_rho}}, out / "cca_spectrum.csv", manifest, out);
    CsvTable csv({"set", "sample", "cm1_neural", "cm2_neural", "cm1_behavior", "cm2_behavior"});
    for (const auto* set : {&control.trained_variates_x, &control.control_variates_x}) {
      const bool trained = set == &control.trained_variates_x;
      const Mat& vx = *set;
      const Mat& vy = trained ? control.trained_variates_y : control.control_variates_y;
      for (Eigen::Index i = 0; i < vx.rows(); ++i)
        csv.row()
            .add(std::string(trained ? "trained" : "control"))
            .add(static_cast<int>(i))
            .add(vx(i, 0))
            .add(vx.cols() > 1 ? vx(i, 1) : 0.0)
            .add(vy(i, 0))
            .add(vy.cols() > 1 ? vy(i, 1) : 0.0);
    }
    csv.save(out / "control_variates.csv");
    manifest.add_artifact(out, out / "control_variates.csv");
  }
  {
    Stopwatch sw(manifest, "sweep");
    note(log, "bpf sweep");
    const std::array<BpfMetric, 3> metrics{BpfMetric::L1, BpfMetric::L2, BpfMetric::L3};
    const auto cells = bpf_sweep(ds.samples, cfg.bpf, kSweepRadiusScales, metrics, cfg.cca.options);
    CsvTable csv({"radius_scale", "metric", "mode", "rho"});
    for (const auto& c : cells)
      for (Eigen::Index i = 0; i < c.rho.size(); ++i)
        csv.row().add(c.radius_scale).add(std::string(metric_name(c.metric))).add(static_cast<int>(i + 1)).add(c.rho[i]);
    csv.save(out / "sweep.csv");
    manifest.add_artifact(out, out / "sweep.csv");
  }
  CounterfactualSummary cf;
  {
    Stopwatch sw(manifest, "counterfactual");
    note(log, "counterfactual injection");
    const auto tasks = counterfactual_tasks(ds.samples, cfg.counterfactual.n_tasks);
    CcaOptions full = cfg.cca.options;
    full.k_x = params.dims.hidden;
    full.k_y = std::max(full.k_y, full.k_x);
    full.k_cca = full.k_x;
    const CcaModel full_model = cca_fit(centroids, behavior, full);
    CounterfactualOptions co;
    co.cutoff_k = cfg.counterfactual.cutoff_k;
    co.noise_std = cfg.counterfactual.noise_std;
    co.seed = derive_seed(cfg.seed, 0xCF);
    co.convergence.trial_budget = cfg.counterfactual.trial_budget;
    co.convergence.timeout = es.episode_timeout;
    co.threads = options.threads;
    write_json(out / "cf_model.json", full_model);
    manifest.add_artifact(out, out / "cf_model.json");
    cf = counterfactual_suite(params, full_model, tasks, co);
    save_counterfactual(cf, out / "counterfactual.csv", out / "counterfactual.json", manifest, out);
    for (int k : {3, 5, 10}) {
      if (k == co.cutoff_k || k > full.k_cca) continue;
      CounterfactualOptions ck = co;
      ck.cutoff_k = k;
      const std::string stem = "counterfactual_k" + std::to_string(k);
      save_counterfactual(counterfactual_suite(params, full_model, tasks, ck), out / (stem + ".csv"),
                          out / (stem + ".json"), manifest, out);
    }
  }
  if (options.plots) {
    Stopwatch sw(manifest, "plots");
    save_plot(out / "ftli.svg", PlotKind::Histogram,
              {{"trained", {}, ftli_run.trained.lambdas}, {"random", {}, ftli_run.random.lambdas}},
              {"FTLI over held-out tasks", "lambda (nats/step)", "tasks"}, manifest, out);
    std::vector<Series> rec;
    for (const auto& c : curves) {
      if (c.variant != 0) continue;
      Series s{"eps=" + format_double(c.eps), {}, {}};
      for (std::size_t k = 0; k < c.distance.size(); ++k) {
        s.x.push_back(static_cast<double>(k));
        s.y.push_back(c.distance[k]);
      }
      rec.push_back(std::move(s));
      if (rec.size() >= 6) break;
    }
    PlotStyle rs{"Distance to nominal cycle", "steps after perturbation", "distance"};
    rs.log_y = true;
    save_plot(out / "recovery.svg", PlotKind::Recovery, rec, rs, manifest, out);
    save_plot(out / "cca_spectrum.svg", PlotKind::Spectrum,
              {curve_series("trained", control.trained_rho), curve_series("control", control.control_rho)},
              {"Canonical correlations", "mode", "rho"}, manifest, out);
    Series sc{"trained", {}, {}};
    for (Eigen::Index i = 0; i < control.trained_variates_x.rows(); ++i) {
      sc.x.push_back(control.trained_variates_x(i, 0));
      sc.y.push_back(control.trained_variates_y(i, 0));
    }
    save_plot(out / "cm1_scatter.svg", PlotKind::Scatter, {sc}, {"CM1 neural vs behavior", "neural", "behavior"},
              manifest, out);
    std::vector<Series> hist;
    for (std::size_t m = 0; m < kAllInterventions.size(); ++m) {
      Series s{std::string(intervention_name(kAllInterventions[m])), {}, {}};
      for (const auto& r : cf.rows)
        if (r.mode == kAllInterventions[m]) s.y.push_back(r.result.value_or(cfg.counterfactual.trial_budget));
      hist.push_back(std::move(s));
    }
    save_plot(out / "counterfactual.svg", PlotKind::Histogram, hist, {"Convergence time", "t_conv (steps)", "tasks"},
              manifest, out);
  }
  manifest.save(out / "manifest.json");
  return manifest;
}

}  // namespace dynlab
