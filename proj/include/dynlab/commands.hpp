#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dynlab/io.hpp"
#include "dynlab/pipeline.hpp"
#include "dynlab/stability.hpp"

namespace dynlab {

// Artifact writers shared by the CLI subcommands and `repro`. Each writes
// its files under `dir`, records them in `manifest` and returns the data.

using Log = std::function<void(const std::string&)>;

TrainResult cmd_train(const EsConfig& cfg, const std::filesystem::path& ckpt_dir, const std::filesystem::path& log_csv,
                      RunManifest& manifest, const std::filesystem::path& root, const Log& log = {});

std::vector<MazeTask> cmd_gen_mazes(std::uint64_t seed, int n, const MazeConfig& maze,
                                    const std::filesystem::path& out, RunManifest& manifest,
                                    const std::filesystem::path& root);

struct FtliRun {
  FtliSummary trained;
  FtliSummary random;
};
// One CSV with columns policy,task_seed,lambda,converged.
FtliRun cmd_ftli(const PolicyParams& trained, const EsConfig& es, const FtliConfig& cfg, unsigned threads,
                 const std::filesystem::path& out, RunManifest& manifest, const std::filesystem::path& root);

// Recovery curves on the first `n_tasks` held-out tasks whose closed loop
// converges; CSV columns task_seed,eps,variant,period,step,distance.
std::vector<RecoveryCurve> cmd_perturb(const PolicyParams& params, const EsConfig& es, const PerturbConfig& cfg,
                                       const std::filesystem::path& out, RunManifest& manifest,
                                       const std::filesystem::path& root);

// Writes <dir>/index.json plus one compact JSON per sample (cycle, drive
// and maze).
void save_dataset(const Dataset& ds, const std::filesystem::path& dir, RunManifest& manifest,
                  const std::filesystem::path& root);
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

// Writes <dir>/index.json and <dir>/library/cycle_NNNNN.json.
void save_acf(const AcfResult& acf, const std::filesystem::path& dir, RunManifest& manifest,
              const std::filesystem::path& root);

void save_spectrum(const std::vector<SpectrumRecord>& spec, const std::filesystem::path& out, RunManifest& manifest,
                   const std::filesystem::path& root);

// Fields: <dir>/index.json header and <dir>/fields.bin with packed
// little-endian f32 grids in sample order.
void save_fields(const std::vector<BehavioralField>& fields, const std::vector<std::string>& ids,
                 const std::filesystem::path& dir, RunManifest& manifest, const std::filesystem::path& root);
struct LoadedFields {
  BpfConfig config;
  std::vector<std::string> ids;
  Mat rows;  // n x (grid_h * grid_w)
};
LoadedFields load_fields(const std::filesystem::path& dir);

// Trajectory list: [{"id": ..., "cells": [[r, c], ...]}, ...].
struct NamedPath {
  std::string id;
  std::vector<Cell> cells;
};
void save_paths(const std::vector<NamedPath>& paths, const std::filesystem::path& out, RunManifest& manifest,
                const std::filesystem::path& root);
std::vector<NamedPath> load_paths(const std::filesystem::path& path);
std::vector<NamedPath> dataset_paths(std::span<const Sample> samples);
std::vector<BehavioralField> build_fields(const std::vector<NamedPath>& paths, const BpfConfig& cfg);

void save_rho_csv(const std::vector<std::pair<std::string, Vec>>& spectra, const std::filesystem::path& out,
                  RunManifest& manifest, const std::filesystem::path& root);

void save_counterfactual(const CounterfactualSummary& s, const std::filesystem::path& csv,
                         const std::filesystem::path& summary_json, RunManifest& manifest,
                         const std::filesystem::path& root);

std::string sample_id(const Sample& s);

// Same recurrent weights, readout redrawn from N(0, stddev^2): the ghost
// control for the action-consistency filter.
PolicyParams with_random_readout(const PolicyParams& params, double stddev, std::uint64_t seed);

struct ReproOptions {
  bool plots = true;
  unsigned threads = 0;
  Log log;
};

// Full pipeline: train (or load) -> held-out eval -> ftli -> perturb ->
// dataset -> acf -> spectrum -> bpf -> cca/rsa -> control -> sweep ->
// counterfactual -> plots -> manifest.json. Returns the manifest.
RunManifest run_repro(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, const ReproOptions& options = {});

}  // namespace dynlab
