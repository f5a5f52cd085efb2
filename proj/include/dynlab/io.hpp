#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dynlab/alignment.hpp"
#include "dynlab/bpf.hpp"
#include "dynlab/es.hpp"

namespace dynlab {

inline constexpr const char* kToolVersion = "dynlab 1.0.0";
inline constexpr const char* kConfigSchema = "dynlab.experiment.v1";

struct FtliConfig {
  int n_tasks = 50;
  int horizon = 1000;
  double eps = 1e-6;
  int warmup_budget = 1000;
  double random_std = 1.0;  // baseline policy
};

struct PerturbConfig {
  std::vector<double> eps{0.01, 0.1, 0.5};
  int variants = 10;
  int horizon = 200;
  int n_tasks = 3;
  bool closed_loop = false;
};

struct AcfConfig {
  int n_probes = 10000;
  int warmup = 1000;
  double eps_closure = 1e-4;
};

struct CcaConfig {
  int n_samples = 2000;
  CcaOptions options;
  double control_margin = 0.1;
};

struct CounterfactualConfig {
  int n_tasks = 100;
  int cutoff_k = 3;
  double noise_std = 1.0;
  int trial_budget = 1000;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "out";
  std::optional<std::filesystem::path> checkpoint;  // skip training when set
  EsConfig es;  // also carries env (maze, timeout) and policy (arch, dims)
  FtliConfig ftli;
  PerturbConfig perturb;
  AcfConfig acf;
  BpfConfig bpf;
  CcaConfig cca;
  CounterfactualConfig counterfactual;

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
void from_json(const nlohmann::json& j, ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);
// RNN_DYNLAB_SEED, when set, replaces the global seed.
std::uint64_t seed_override(std::uint64_t seed);

// ---- files ---------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

// Minimal CSV: header row then rows; doubles printed round-trip exact.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  CsvTable& row();
  CsvTable& add(double v);
  CsvTable& add(long long v);
  CsvTable& add(int v) { return add(static_cast<long long>(v)); }
  CsvTable& add(std::uint64_t v);
  CsvTable& add(const std::string& v);
  std::string str() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct CsvData {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int column(const std::string& name) const;  // -1 if absent
  std::vector<double> numeric(int col) const;
};
CsvData parse_csv(const std::string& text);

std::string format_double(double v);

// ---- manifest ------------------------------------------------------------

struct ArtifactRecord {
  std::string path;  // relative to the manifest directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  std::string config_hash;
  std::string tool_version = kToolVersion;
  std::string command;
  std::vector<ArtifactRecord> artifacts;
  std::map<std::string, double> timings;

  // `file` is a path as seen from the working directory, inside `root`.
  void add_artifact(const std::filesystem::path& root, const std::filesystem::path& file);
  // Re-hashes every artifact; returns the paths that no longer match.
  std::vector<std::string> verify(const std::filesystem::path& root) const;
  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);
};

std::string file_sha256(const std::filesystem::path& path);
std::string json_hash(const nlohmann::json& j);

}  // namespace dynlab
