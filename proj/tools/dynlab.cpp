#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dynlab/commands.hpp"
#include "dynlab/error.hpp"
#include "dynlab/plot.hpp"
#include "dynlab/rng.hpp"

namespace fs = std::filesystem;
using namespace dynlab;

namespace {

struct Globals {
  unsigned threads = 0;
  std::string config;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

ExperimentConfig config_of(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.es.seed = *g.seed;
  }
  cfg.seed = seed_override(cfg.seed);
  cfg.es.seed = cfg.seed;
  return cfg;
}

unsigned threads_of(const Globals& g) {
  if (g.threads) return g.threads;
  if (const char* e = std::getenv("RNN_DYNLAB_THREADS")) return static_cast<unsigned>(std::strtoul(e, nullptr, 10));
  return 0;
}

// Env/arch settings of `cfg` with the architecture taken from the checkpoint.
EsConfig es_for(const ExperimentConfig& cfg, const PolicyParams& params, const Globals& g) {
  EsConfig es = cfg.es;
  es.arch = params.arch;
  es.dims = params.dims;
  es.threads = threads_of(g);
  return es;
}

// Directory outputs carry <dir>/manifest.json; file outputs <file>.manifest.json.
struct Output {
  fs::path root;
  fs::path manifest_path;
  RunManifest manifest;

  Output(const fs::path& out, bool is_dir, const std::string& command, const ExperimentConfig& cfg) {
    if (is_dir) {
      fs::create_directories(out);
      root = out;
      manifest_path = out / "manifest.json";
    } else {
      root = out.has_parent_path() ? out.parent_path() : fs::path(".");
      fs::create_directories(root);
      manifest_path = out.string() + ".manifest.json";
    }
    manifest.command = command;
    manifest.config_hash = json_hash(nlohmann::json(cfg));
  }
  void add(const fs::path& file) { manifest.add_artifact(root, file); }
  void save() const { manifest.save(manifest_path); }
};

Log logger(const Globals& g) {
  if (g.quiet) return {};
  return [](const std::string& msg) { std::cerr << msg << '\n'; };
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Mat fields_for(const std::vector<Sample>& samples, const fs::path& fields_dir) {
  const LoadedFields f = load_fields(fields_dir);
  if (f.ids.size() != samples.size()) throw Error(ErrorCode::LengthMismatch, "fields and cycles differ in count");
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (f.ids[i] != sample_id(samples[i]))
      throw Error(ErrorCode::SchemaMismatch, "field " + f.ids[i] + " does not pair with cycle " + sample_id(samples[i]));
  return f.rows;
}

// ---- plot ----------------------------------------------------------------

std::vector<Series> plot_series(PlotKind kind, const CsvData& csv, std::vector<std::string> columns,
                                const std::string& x_col, const std::string& group) {
  auto col = [&](const std::string& name) {
    const int c = csv.column(name);
    if (c < 0) throw Error(ErrorCode::SchemaMismatch, "CSV has no column '" + name + "'");
    return c;
  };
  auto numeric_col = [&](int c) {
    for (const auto& r : csv.rows) {
      if (static_cast<std::size_t>(c) >= r.size()) return false;
      char* end = nullptr;
      std::strtod(r[static_cast<std::size_t>(c)].c_str(), &end);
      if (end == r[static_cast<std::size_t>(c)].c_str()) return false;
    }
    return true;
  };
  const int gcol = group.empty() ? -1 : col(group);
  int xcol = -1;
  if (kind != PlotKind::Histogram) xcol = x_col.empty() ? 0 : col(x_col);
  if (columns.empty()) {
    if (kind == PlotKind::Histogram) {
      for (int c = static_cast<int>(csv.header.size()) - 1; c >= 0; --c)
        if (c != gcol && numeric_col(c)) {
          columns.push_back(csv.header[static_cast<std::size_t>(c)]);
          break;
        }
    } else {
      for (int c = 0; c < static_cast<int>(csv.header.size()); ++c)
        if (c != xcol && c != gcol && numeric_col(c)) columns.push_back(csv.header[static_cast<std::size_t>(c)]);
    }
    if (columns.empty()) throw Error(ErrorCode::SchemaMismatch, "CSV has no numeric column to plot");
  }
  std::vector<Series> out;
  std::map<std::string, std::size_t> index;
  for (const auto& name : columns) {
    const int yc = col(name);
    if (!csv.rows.empty() && !numeric_col(yc)) throw Error(ErrorCode::SchemaMismatch, "column '" + name + "' is not numeric");
    if (xcol >= 0 && !csv.rows.empty() && !numeric_col(xcol))
      throw Error(ErrorCode::SchemaMismatch, "x column is not numeric");
    for (const auto& r : csv.rows) {
      std::string key = name;
      if (gcol >= 0) key = columns.size() > 1 ? r[static_cast<std::size_t>(gcol)] + ":" + name : r[static_cast<std::size_t>(gcol)];
      auto it = index.find(key);
      if (it == index.end()) {
        it = index.emplace(key, out.size()).first;
        out.push_back({key, {}, {}});
      }
      Series& s = out[it->second];
      s.y.push_back(std::stod(r[static_cast<std::size_t>(yc)]));
      if (xcol >= 0) s.x.push_back(std::stod(r[static_cast<std::size_t>(xcol)]));
    }
    if (csv.rows.empty() && index.find(name) == index.end()) {
      index.emplace(name, out.size());
      out.push_back({name, {}, {}});
    }
  }
  return out;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(1) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent maze policies: training and dynamical analysis", "dynlab"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--threads", g.threads, "worker cap (0: all cores; RNN_DYNLAB_THREADS)");
  app.add_option("--config", g.config, "experiment config JSON")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "global seed override");
  app.add_flag("--quiet", g.quiet, "no progress on stderr");
  app.set_version_flag("--version", kToolVersion);

  std::function<void()> action;

  // gen-mazes
  auto* gen = app.add_subcommand("gen-mazes", "procedurally generate maze tasks");
  int gen_n = 100;
  std::string gen_out;
  gen->add_option("--n", gen_n, "number of mazes")->check(CLI::NonNegativeNumber);
  gen->add_option("--out", gen_out, "output JSON")->required();
  gen->callback([&] {
    action = [&] {
      const auto cfg = config_of(g);
      Output o(gen_out, false, "gen-mazes", cfg);
      cmd_gen_mazes(cfg.seed, gen_n, cfg.es.maze, gen_out, o.manifest, o.root);
      o.save();
    };
  });

  // train
  auto* tr = app.add_subcommand("train", "evolution-strategies training");
  std::string tr_out;
  std::optional<int> tr_gens;
  tr->add_option("--out", tr_out, "checkpoint directory")->required();
  tr->add_option("--generations", tr_gens, "override es.generations");
  tr->callback([&] {
    action = [&] {
      auto cfg = config_of(g);
      if (tr_gens) cfg.es.generations = *tr_gens;
      cfg.validate();
      EsConfig es = cfg.es;
      es.threads = threads_of(g);
      Output o(tr_out, true, "train", cfg);
      const TrainResult res = cmd_train(es, tr_out, fs::path(tr_out) / "train_log.csv", o.manifest, o.root, logger(g));
      o.save();
      print_json({{"generations", res.log.size()}, {"final_success_rate", res.log.empty() ? 0.0 : res.log.back().success_rate}});
    };
  });

  // rollout
  auto* ro = app.add_subcommand("rollout", "closed-loop rollout on one maze");
  std::string ro_ckpt, ro_out, ro_drive;
  std::uint64_t ro_maze = 0;
  int ro_steps = 1000;
  bool ro_hidden = false;
  ro->add_option("--ckpt", ro_ckpt, "checkpoint directory")->required();
  ro->add_option("--maze-seed", ro_maze, "maze seed")->required();
  ro->add_option("--steps", ro_steps, "total steps")->check(CLI::PositiveNumber);
  ro->add_option("--out", ro_out, "trajectory JSON")->required();
  ro->add_option("--drive-out", ro_drive, "also write the converged drive JSON");
  ro->add_flag("--hidden", ro_hidden, "include hidden states");
  ro->callback([&] {
    action = [&] {
      const auto cfg = config_of(g);
      const PolicyParams params = load_checkpoint(ro_ckpt);
      const EsConfig es = es_for(cfg, params, g);
      const MazeTask task = generate_maze(ro_maze, es.maze);
      RolloutOptions opt;
      opt.timeout = es.episode_timeout;
      const Trajectory traj = rollout(params, task, ro_steps, opt);
      nlohmann::json pos = nlohmann::json::array(), hidden = nlohmann::json::array(), events = nlohmann::json::array();
      std::string actions;
      for (std::size_t t = 0; t < traj.size(); ++t) {
        pos.push_back({traj.states[t].env.position.row, traj.states[t].env.position.col});
        actions += action_char(traj.actions[t]);
        events.push_back(std::string(event_name(traj.events[t])));
        if (ro_hidden) hidden.push_back(std::vector<double>(traj.states[t].h.data(), traj.states[t].h.data() + traj.states[t].h.size()));
      }
      nlohmann::json j{{"schema", "dynlab.rollout.v1"}, {"task", task}, {"positions", pos}, {"actions", actions},
                       {"events", events}, {"converged", is_converged(traj)}};
      if (ro_hidden) j["hidden"] = hidden;
      std::optional<DriveSpec> drive;
      if (!ro_drive.empty()) drive = extract_drive(traj);
      Output o(ro_out, false, "rollout", cfg);
      write_json(ro_out, j);
      o.add(ro_out);
      if (drive) {
        write_json(ro_drive, *drive);
        o.add(ro_drive);
      }
      o.save();
    };
  });

  // ftli
  auto* ft = app.add_subcommand("ftli", "finite-time Lyapunov indicators, trained vs random policy");
  std::string ft_ckpt, ft_out;
  std::optional<int> ft_tasks, ft_horizon;
  std::optional<double> ft_eps;
  ft->add_option("--ckpt", ft_ckpt)->required();
  ft->add_option("--tasks", ft_tasks, "held-out tasks");
  ft->add_option("--horizon", ft_horizon, "samples K");
  ft->add_option("--eps", ft_eps, "perturbation size");
  ft->add_option("--out", ft_out)->required();
  ft->callback([&] {
    action = [&] {
      auto cfg = config_of(g);
      if (ft_tasks) cfg.ftli.n_tasks = *ft_tasks;
      if (ft_horizon) cfg.ftli.horizon = *ft_horizon;
      if (ft_eps) cfg.ftli.eps = *ft_eps;
      cfg.validate();
      const PolicyParams params = load_checkpoint(ft_ckpt);
      Output o(ft_out, false, "ftli", cfg);
      const FtliRun run = cmd_ftli(params, es_for(cfg, params, g), cfg.ftli, threads_of(g), ft_out, o.manifest, o.root);
      o.save();
      print_json({{"trained_median", run.trained.median}, {"random_median", run.random.median}});
    };
  });

  // perturb
  auto* pe = app.add_subcommand("perturb", "perturbation-recovery curves");
  std::string pe_ckpt, pe_out, pe_eps;
  std::optional<int> pe_variants, pe_horizon, pe_tasks;
  bool pe_closed = false;
  pe->add_option("--ckpt", pe_ckpt)->required();
  pe->add_option("--eps", pe_eps, "comma-separated perturbation sizes");
  pe->add_option("--variants", pe_variants);
  pe->add_option("--horizon", pe_horizon);
  pe->add_option("--tasks", pe_tasks);
  pe->add_flag("--closed-loop", pe_closed, "let the perturbed run choose its own actions");
  pe->add_option("--out", pe_out)->required();
  pe->callback([&] {
    action = [&] {
      auto cfg = config_of(g);
      if (!pe_eps.empty()) {
        cfg.perturb.eps.clear();
        for (const auto& e : split_list(pe_eps)) cfg.perturb.eps.push_back(std::stod(e));
      }
      if (pe_variants) cfg.perturb.variants = *pe_variants;
      if (pe_horizon) cfg.perturb.horizon = *pe_horizon;
      if (pe_tasks) cfg.perturb.n_tasks = *pe_tasks;
      if (pe_closed) cfg.perturb.closed_loop = true;
      cfg.validate();
      const PolicyParams params = load_checkpoint(pe_ckpt);
      Output o(pe_out, false, "perturb", cfg);
      const auto curves = cmd_perturb(params, es_for(cfg, params, g), cfg.perturb, pe_out, o.manifest, o.root);
      o.save();
      print_json({{"curves", curves.size()}});
    };
  });

  // extract-cycles
  auto* ex = app.add_subcommand("extract-cycles", "limit cycles: ACF probing of one drive, or a per-task dataset");
  std::string ex_ckpt, ex_drive, ex_out;
  std::optional<int> ex_n;
  bool ex_ghost = false;
  ex->add_option("--ckpt", ex_ckpt)->required();
  ex->add_option("--drive", ex_drive, "drive JSON: probe with random initial states (ACF mode)");
  ex->add_option("--n", ex_n, "probes (ACF mode) or samples (dataset mode)");
  ex->add_flag("--ghost", ex_ghost, "replace the readout with random weights (ACF mode)");
  ex->add_option("--out", ex_out, "output directory")->required();
  ex->callback([&] {
    action = [&] {
      const auto cfg = config_of(g);
      PolicyParams params = load_checkpoint(ex_ckpt);
      const EsConfig es = es_for(cfg, params, g);
      Output o(ex_out, true, "extract-cycles", cfg);
      if (!ex_drive.empty()) {
        if (ex_ghost) params = with_random_readout(params, 1.0, derive_seed(cfg.seed, 0x6057));
        AcfOptions opt;
        opt.warmup = cfg.acf.warmup;
        opt.eps_closure = cfg.acf.eps_closure;
        opt.seed = derive_seed(cfg.seed, 0xACF);
        opt.threads = es.threads;
        const AcfResult acf = acf_sample(params, read_json(ex_drive).get<DriveSpec>(), ex_n.value_or(cfg.acf.n_probes), opt);
        save_acf(acf, ex_out, o.manifest, o.root);
        print_json({{"n_probes", acf.n_probes},
                    {"fraction_closed", acf.fraction_closed()},
                    {"fraction_consistent", acf.fraction_consistent()},
                    {"library", acf.library.size()}});
      } else {
        DatasetOptions opt;
        opt.n_samples = ex_n.value_or(cfg.cca.n_samples);
        opt.seed = cfg.seed;
        opt.maze = es.maze;
        opt.cycle.timeout = es.episode_timeout;
        opt.cycle.warmup = cfg.acf.warmup;
        opt.cycle.eps_closure = cfg.acf.eps_closure;
        opt.threads = es.threads;
        const Dataset ds = build_dataset(params, opt);
        save_dataset(ds, ex_out, o.manifest, o.root);
        save_paths(dataset_paths(ds.samples), fs::path(ex_out) / "trajs.json", o.manifest, o.root);
        print_json({{"samples", ds.samples.size()}, {"tasks_tried", ds.tasks_tried}, {"tasks_converged", ds.tasks_converged}});
      }
      o.save();
    };
  });

  // spectrum
  auto* sp = app.add_subcommand("spectrum", "Jacobian spectra along a limit cycle");
  std::string sp_ckpt, sp_cycle, sp_out, sp_mode = "discrete";
  sp->add_option("--ckpt", sp_ckpt)->required();
  sp->add_option("--cycle", sp_cycle, "LimitCycle JSON")->required();
  sp->add_option("--mode", sp_mode, "discrete|vector")->check(CLI::IsMember({"discrete", "vector"}));
  sp->add_option("--out", sp_out)->required();
  sp->callback([&] {
    action = [&] {
      const auto cfg = config_of(g);
      const PolicyParams params = load_checkpoint(sp_ckpt);
      const LimitCycle cycle = read_json(sp_cycle).get<LimitCycle>();
      const SpectrumMode mode = sp_mode == "discrete" ? SpectrumMode::DiscreteMap : SpectrumMode::VectorField;
      const auto spec = cycle_spectrum(params, cycle, mode);
      Output o(sp_out, false, "spectrum", cfg);
      save_spectrum(spec, sp_out, o.manifest, o.root);
      StroboscopicOptions so;
      so.seed = derive_seed(cfg.seed, 0x5707);
      const ContractionEstimate ce = stroboscopic_check(params, cycle.observations, cycle.states.front(), so);
      o.save();
      const bool stable = std::all_of(spec.begin(), spec.end(), [&](const SpectrumRecord& r) { return is_stable(r, mode); });
      print_json({{"stable", stable},
                  {"product_bound", ce.product_bound},
                  {"fixed_point_residual", ce.fixed_point_residual}});
    };
  });

  // bpf
  auto* bp = app.add_subcommand("bpf", "behavioral potential fields from trajectories");
  std::string bp_trajs, bp_cfg, bp_out;
  bp->add_option("--trajs", bp_trajs, "trajectory list JSON")->required();
  bp->add_option("--cfg", bp_cfg, "BPF config JSON");
  bp->add_option("--out", bp_out, "output directory")->required();
  bp->callback([&] {
    action = [&] {
      const auto cfg = config_of(g);
      const BpfConfig bcfg = bp_cfg.empty() ? cfg.bpf : read_json(bp_cfg).get<BpfConfig>();
      bcfg.validate();
      const auto paths = load_paths(bp_trajs);
      std::vector<std::string> ids;
      for (const auto& p : paths) ids.push_back(p.id);
      Output o(bp_out, true, "bpf", cfg);
      save_fields(build_fields(paths, bcfg), ids, bp_out, o.manifest, o.root);
      o.save();
    };
  });

  // cca
  auto* cc = app.add_subcommand("cca", "canonical correlation of cycle centroids and fields");
  std::string cc_cycles, cc_fields, cc_out;
  std::optional<int> cc_k, cc_kx, cc_ky;
  std::optional<double> cc_ridge;
  cc->add_option("--cycles", cc_cycles, "dataset cycle directory")->required();
  cc->add_option("--fields", cc_fields, "field directory")->required();
  cc->add_option("--k", cc_k, "canonical modes");
  cc->add_option("--kx", cc_kx, "neural PCA components");
  cc->add_option("--ky", cc_ky, "behavior PCA components");
  cc->add_option("--ridge", cc_ridge);
  cc->add_option("--out", cc_out, "model JSON; spectrum and RSA land beside it")->required();
  cc->callback([&] {
    action = [&] {
      auto cfg = config_of(g);
      if (cc_k) cfg.cca.options.k_cca = *cc_k;
      if (cc_kx) cfg.cca.options.k_x = *cc_kx;
      if (cc_ky) cfg.cca.options.k_y = *cc_ky;
      if (cc_ridge) cfg.cca.options.ridge = *cc_ridge;
      const auto samples = load_dataset(cc_cycles);
      const Mat x = centroid_matrix(samples);
      const Mat y = fields_for(samples, cc_fields);
      const CcaModel model = cca_fit(x, y, cfg.cca.options);
      Output o(cc_out, false, "cca", cfg);
      write_json(cc_out, model);
      o.add(cc_out);
      const fs::path stem = fs::path(cc_out).replace_extension();
      save_rho_csv({{"trained", model.rho}}, stem.string() + "_spectrum.csv", o.manifest, o.root);
      const double r = rsa_pearson(pairwise_distances(x), pairwise_distances(y));
      write_json(stem.string() + "_rsa.json", {{"pearson_r", r}, {"n", x.rows()}});
      o.add(stem.string() + "_rsa.json");
      o.save();
      print_json({{"rho", std::vector<double>(model.rho.data(), model.rho.data() + model.rho.size())}, {"rsa", r}});
    };
  });

  // control
  auto* co = app.add_subcommand("control", "CCA against action-constrained pseudo-manifold centroids");
  std::string co_ckpt, co_cycles, co_fields, co_out;
  std::optional<double> co_margin;
  co->add_option("--ckpt", co_ckpt)->required();
  co->add_option("--cycles", co_cycles)->required();
  co->add_option("--fields", co_fields)->required();
  co->add_option("--margin", co_margin, "logit margin of the pseudo-manifold");
  co->add_option("--out", co_out, "spectrum CSV")->required();
  co->callback([&] {
    action = [&] {
      auto cfg = config_of(g);
      if (co_margin) cfg.cca.control_margin = *co_margin;
      const PolicyParams params = load_checkpoint(co_ckpt);
      const auto samples = load_dataset(co_cycles);
      const Mat x = centroid_matrix(samples);
      const Mat y = fields_for(samples, co_fields);
      const Mat ctrl = control_centroids(samples, params, cfg.cca.control_margin, derive_seed(cfg.seed, 0xC7));
      const ControlResult res = control_experiment(x, ctrl, y, cfg.cca.options);
      Output o(co_out, false, "control", cfg);
      save_rho_csv({{"trained", res.trained_rho}, {"control", res.control_rho}}, co_out, o.manifest, o.root);
      o.save();
    };
  });

  // sweep
  auto* sw = app.add_subcommand("sweep", "CCA spectra across BPF radius and metric");
  std::string sw_cycles, sw_cfg, sw_out;
  sw->add_option("--cycles", sw_cycles)->required();
  sw->add_option("--cfg", sw_cfg, "base BPF config JSON");
  sw->add_option("--out", sw_out)->required();
  sw->callback([&] {
    action = [&] {
      const auto cfg = config_of(g);
      const BpfConfig base = sw_cfg.empty() ? cfg.bpf : read_json(sw_cfg).get<BpfConfig>();
      const auto samples = load_dataset(sw_cycles);
      const std::array<BpfMetric, 3> metrics{BpfMetric::L1, BpfMetric::L2, BpfMetric::L3};
      const auto cells = bpf_sweep(samples, base, kSweepRadiusScales, metrics, cfg.cca.options);
      CsvTable csv({"radius_scale", "metric", "mode", "rho"});
      for (const auto& c : cells)
        for (Eigen::Index i = 0; i < c.rho.size(); ++i)
          csv.row().add(c.radius_scale).add(std::string(metric_name(c.metric))).add(static_cast<int>(i + 1)).add(c.rho[i]);
      Output o(sw_out, false, "sweep", cfg);
      csv.save(sw_out);
      o.add(sw_out);
      o.save();
    };
  });

  // counterfactual
  auto* cf = app.add_subcommand("counterfactual", "canonical-space state injection");
  std::string cf_ckpt, cf_cca, cf_cycles, cf_out;
  std::optional<int> cf_tasks, cf_k, cf_budget;
  std::optional<double> cf_noise;
  cf->add_option("--ckpt", cf_ckpt)->required();
  cf->add_option("--cca", cf_cca, "CCA model JSON")->required();
  cf->add_option("--cycles", cf_cycles, "dataset cycle directory")->required();
  cf->add_option("--tasks", cf_tasks);
  cf->add_option("--k", cf_k, "canonical cutoff K");
  cf->add_option("--noise-std", cf_noise);
  cf->add_option("--budget", cf_budget, "trial step budget");
  cf->add_option("--out", cf_out, "per-task CSV; summary JSON lands beside it")->required();
  cf->callback([&] {
    action = [&] {
      auto cfg = config_of(g);
      if (cf_tasks) cfg.counterfactual.n_tasks = *cf_tasks;
      if (cf_k) cfg.counterfactual.cutoff_k = *cf_k;
      if (cf_noise) cfg.counterfactual.noise_std = *cf_noise;
      if (cf_budget) cfg.counterfactual.trial_budget = *cf_budget;
      cfg.validate();
      const PolicyParams params = load_checkpoint(cf_ckpt);
      const EsConfig es = es_for(cfg, params, g);
      const CcaModel model = read_json(cf_cca).get<CcaModel>();
      const auto samples = load_dataset(cf_cycles);
      CounterfactualOptions opt;
      opt.cutoff_k = cfg.counterfactual.cutoff_k;
      opt.noise_std = cfg.counterfactual.noise_std;
      opt.seed = derive_seed(cfg.seed, 0xCF);
      opt.convergence.trial_budget = cfg.counterfactual.trial_budget;
      opt.convergence.timeout = es.episode_timeout;
      opt.threads = es.threads;
      const auto summary =
          counterfactual_suite(params, model, counterfactual_tasks(samples, cfg.counterfactual.n_tasks), opt);
      Output o(cf_out, false, "counterfactual", cfg);
      const fs::path stem = fs::path(cf_out).replace_extension();
      save_counterfactual(summary, cf_out, stem.string() + "_summary.json", o.manifest, o.root);
      o.save();
      nlohmann::json med;
      for (std::size_t m = 0; m < kAllInterventions.size(); ++m)
        med[std::string(intervention_name(kAllInterventions[m]))] = summary.median[m];
      print_json({{"n_tasks", summary.n_tasks}, {"median_t_conv", med}});
    };
  });

  // plot
  auto* pl = app.add_subcommand("plot", "render a CSV as SVG");
  std::string pl_kind, pl_in, pl_out, pl_x, pl_group, pl_title;
  std::vector<std::string> pl_cols;
  bool pl_logy = false;
  pl->add_option("--kind", pl_kind, "hist|scatter|spectrum|recovery")->required();
  pl->add_option("--in", pl_in, "CSV input")->required()->check(CLI::ExistingFile);
  pl->add_option("--out", pl_out, "SVG output")->required();
  pl->add_option("--column", pl_cols, "y columns (default: last numeric for hist, all numeric otherwise)");
  pl->add_option("--x", pl_x, "x column (default: first)");
  pl->add_option("--group", pl_group, "split series by this column");
  pl->add_option("--title", pl_title);
  pl->add_flag("--log-y", pl_logy);
  pl->callback([&] {
    action = [&] {
      const auto cfg = config_of(g);
      const PlotKind kind = plot_kind_from_name(pl_kind);
      const CsvData csv = parse_csv(read_file(pl_in));
      const auto series = plot_series(kind, csv, pl_cols, pl_x, pl_group);
      PlotStyle style;
      style.title = pl_title.empty() ? fs::path(pl_in).filename().string() : pl_title;
      style.log_y = pl_logy;
      if (kind == PlotKind::Histogram) {
        style.x_label = series.size() == 1 ? series.front().name : "value";
        style.y_label = "count";
      } else {
        style.x_label = pl_x.empty() ? (csv.header.empty() ? "x" : csv.header.front()) : pl_x;
        style.y_label = series.size() == 1 ? series.front().name : "value";
      }
      Output o(pl_out, false, "plot", cfg);
      write_file(pl_out, emit_plot(kind, series, style));
      o.add(pl_out);
      o.save();
    };
  });

  // repro
  auto* rp = app.add_subcommand("repro", "full pipeline from one config");
  std::string rp_out;
  bool rp_no_plots = false;
  rp->add_option("--out", rp_out, "output directory (default: config output_dir)");
  rp->add_flag("--no-plots", rp_no_plots);
  rp->callback([&] {
    action = [&] {
      const auto cfg = config_of(g);
      ReproOptions opt;
      opt.plots = !rp_no_plots;
      opt.threads = threads_of(g);
      opt.log = logger(g);
      const fs::path out = rp_out.empty() ? cfg.output_dir : fs::path(rp_out);
      const RunManifest m = run_repro(cfg, out, opt);
      print_json({{"artifacts", m.artifacts.size()}, {"manifest", (out / "manifest.json").string()}});
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << nlohmann::json{{"error", "UsageError"}, {"message", e.what()}}.dump() << '\n' << app.help();
    return 2;
  }
  try {
    if (action) action();
    return 0;
  } catch (const Error& e) {
    std::cerr << nlohmann::json{{"error", std::string(error_code_name(e.code()))}, {"message", e.what()}}.dump() << '\n';
  } catch (const nlohmann::json::exception& e) {
    std::cerr << nlohmann::json{{"error", "SchemaMismatch"}, {"message", e.what()}}.dump() << '\n';
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "RuntimeError"}, {"message", e.what()}}.dump() << '\n';
  }
  return 1;
}
