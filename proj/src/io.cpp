#include "dynlab/io.hpp"

#include <charconv>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dynlab/blob.hpp"
#include "dynlab/error.hpp"

namespace fs = std::filesystem;

namespace dynlab {

void ExperimentConfig::validate() const {
  es.validate();
  bpf.validate();
  if (ftli.n_tasks < 0 || ftli.horizon < 2 || !(ftli.eps > 0.0) || ftli.warmup_budget < 1)
    throw Error(ErrorCode::InvalidArgument, "invalid ftli section");
  if (perturb.variants < 0 || perturb.horizon < 1 || perturb.n_tasks < 0)
    throw Error(ErrorCode::InvalidArgument, "invalid perturb section");
  for (double e : perturb.eps)
    if (!(e >= 0.0)) throw Error(ErrorCode::InvalidArgument, "perturbation eps must be >= 0");
  if (acf.n_probes < 0 || acf.warmup < 0 || !(acf.eps_closure > 0.0))
    throw Error(ErrorCode::InvalidArgument, "invalid acf section");
  if (cca.n_samples < 3 || cca.options.k_x < 1 || cca.options.k_y < 1 || cca.options.k_cca < 1 || cca.options.ridge < 0)
    throw Error(ErrorCode::InvalidArgument, "invalid cca section");
  if (counterfactual.n_tasks < 0 || counterfactual.cutoff_k < 0 || counterfactual.cutoff_k > cca.options.k_cca ||
      counterfactual.trial_budget < 1)
    throw Error(ErrorCode::InvalidArgument, "invalid counterfactual section");
  if (checkpoint && !fs::exists(*checkpoint / "policy.json"))
    throw Error(ErrorCode::Io, "checkpoint not found: " + checkpoint->string());
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  nlohmann::json es = c.es;
  for (const char* k : {"maze", "arch", "hidden_dim", "episode_timeout", "seed", "threads"}) es.erase(k);
  j = nlohmann::json{
      {"schema", kConfigSchema},
      {"seed", c.seed},
      {"output_dir", c.output_dir.string()},
      {"env",
       {{"width", c.es.maze.width},
        {"height", c.es.maze.height},
        {"wall_prob", c.es.maze.wall_prob},
        {"episode_timeout", c.es.episode_timeout}}},
      {"policy", {{"arch", arch_name(c.es.arch)}, {"hidden", c.es.dims.hidden}}},
      {"es", es},
      {"ftli",
       {{"n_tasks", c.ftli.n_tasks},
        {"horizon", c.ftli.horizon},
        {"eps", c.ftli.eps},
        {"warmup_budget", c.ftli.warmup_budget},
        {"random_std", c.ftli.random_std}}},
      {"perturb",
       {{"eps", c.perturb.eps},
        {"variants", c.perturb.variants},
        {"horizon", c.perturb.horizon},
        {"n_tasks", c.perturb.n_tasks},
        {"closed_loop", c.perturb.closed_loop}}},
      {"acf", {{"n_probes", c.acf.n_probes}, {"warmup", c.acf.warmup}, {"eps_closure", c.acf.eps_closure}}},
      {"bpf", c.bpf},
      {"cca",
       {{"n_samples", c.cca.n_samples},
        {"k_x", c.cca.options.k_x},
        {"k_y", c.cca.options.k_y},
        {"k_cca", c.cca.options.k_cca},
        {"ridge", c.cca.options.ridge},
        {"control_margin", c.cca.control_margin}}},
      {"counterfactual",
       {{"n_tasks", c.counterfactual.n_tasks},
        {"cutoff_k", c.counterfactual.cutoff_k},
        {"noise_std", c.counterfactual.noise_std},
        {"trial_budget", c.counterfactual.trial_budget}}}};
  if (c.checkpoint) j["checkpoint"] = c.checkpoint->string();
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  if (j.value("schema", std::string()) != kConfigSchema)
    throw Error(ErrorCode::SchemaMismatch, std::string("config schema must be ") + kConfigSchema);
  c = ExperimentConfig{};
  c.seed = j.value("seed", c.seed);
  c.output_dir = j.value("output_dir", c.output_dir.string());
  if (j.contains("checkpoint")) c.checkpoint = fs::path(j.at("checkpoint").get<std::string>());
  if (j.contains("es")) c.es = j.at("es").get<EsConfig>();
  c.es.seed = c.seed;
  if (j.contains("env")) {
    const auto& e = j.at("env");
    c.es.maze.width = e.value("width", c.es.maze.width);
    c.es.maze.height = e.value("height", c.es.maze.height);
    c.es.maze.wall_prob = e.value("wall_prob", c.es.maze.wall_prob);
    c.es.episode_timeout = e.value("episode_timeout", c.es.episode_timeout);
  }
  if (j.contains("policy")) {
    const auto& p = j.at("policy");
    c.es.arch = arch_from_name(p.value("arch", std::string(arch_name(c.es.arch))));
    c.es.dims.hidden = p.value("hidden", c.es.dims.hidden);
  }
  if (j.contains("ftli")) {
    const auto& f = j.at("ftli");
    c.ftli.n_tasks = f.value("n_tasks", c.ftli.n_tasks);
    c.ftli.horizon = f.value("horizon", c.ftli.horizon);
    c.ftli.eps = f.value("eps", c.ftli.eps);
    c.ftli.warmup_budget = f.value("warmup_budget", c.ftli.warmup_budget);
    c.ftli.random_std = f.value("random_std", c.ftli.random_std);
  }
  if (j.contains("perturb")) {
    const auto& p = j.at("perturb");
    c.perturb.eps = p.value("eps", c.perturb.eps);
    c.perturb.variants = p.value("variants", c.perturb.variants);
    c.perturb.horizon = p.value("horizon", c.perturb.horizon);
    c.perturb.n_tasks = p.value("n_tasks", c.perturb.n_tasks);
    c.perturb.closed_loop = p.value("closed_loop", c.perturb.closed_loop);
  }
  if (j.contains("acf")) {
    const auto& a = j.at("acf");
    c.acf.n_probes = a.value("n_probes", c.acf.n_probes);
    c.acf.warmup = a.value("warmup", c.acf.warmup);
    c.acf.eps_closure = a.value("eps_closure", c.acf.eps_closure);
  }
  if (j.contains("bpf")) c.bpf = j.at("bpf").get<BpfConfig>();
  if (j.contains("cca")) {
    const auto& a = j.at("cca");
    c.cca.n_samples = a.value("n_samples", c.cca.n_samples);
    c.cca.options.k_x = a.value("k_x", c.cca.options.k_x);
    c.cca.options.k_y = a.value("k_y", c.cca.options.k_y);
    c.cca.options.k_cca = a.value("k_cca", c.cca.options.k_cca);
    c.cca.options.ridge = a.value("ridge", c.cca.options.ridge);
    c.cca.control_margin = a.value("control_margin", c.cca.control_margin);
  }
  if (j.contains("counterfactual")) {
    const auto& a = j.at("counterfactual");
    c.counterfactual.n_tasks = a.value("n_tasks", c.counterfactual.n_tasks);
    c.counterfactual.cutoff_k = a.value("cutoff_k", c.counterfactual.cutoff_k);
    c.counterfactual.noise_std = a.value("noise_std", c.counterfactual.noise_std);
    c.counterfactual.trial_budget = a.value("trial_budget", c.counterfactual.trial_budget);
  }
}

std::uint64_t seed_override(std::uint64_t seed) {
  if (const char* s = std::getenv("RNN_DYNLAB_SEED"); s && *s) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s, s + std::strlen(s), v);
    if (ec != std::errc{} || *p != '\0') throw Error(ErrorCode::InvalidArgument, "RNN_DYNLAB_SEED is not an integer");
    return v;
  }
  return seed;
}

ExperimentConfig load_config(const fs::path& path) {
  ExperimentConfig cfg = read_json(path).get<ExperimentConfig>();
  cfg.seed = seed_override(cfg.seed);
  cfg.es.seed = cfg.seed;
  if (cfg.checkpoint && cfg.checkpoint->is_relative()) cfg.checkpoint = path.parent_path() / *cfg.checkpoint;
  cfg.validate();
  return cfg;
}

// ---- files ---------------------------------------------------------------

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::SchemaMismatch, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_file(path, j.dump(1) + "\n"); }

std::string format_double(double v) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

CsvTable& CsvTable::row() {
  rows_.emplace_back();
  return *this;
}

CsvTable& CsvTable::add(double v) {
  rows_.back().push_back(format_double(v));
  return *this;
}

CsvTable& CsvTable::add(long long v) {
  rows_.back().push_back(std::to_string(v));
  return *this;
}

CsvTable& CsvTable::add(std::uint64_t v) {
  rows_.back().push_back(std::to_string(v));
  return *this;
}

CsvTable& CsvTable::add(const std::string& v) {
  if (v.find_first_of(",\"\n") != std::string::npos)
    throw Error(ErrorCode::InvalidArgument, "CSV cell contains a delimiter: " + v);
  rows_.back().push_back(v);
  return *this;
}

std::string CsvTable::str() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out.push_back(',');
      out += cells[i];
    }
    out.push_back('\n');
  };
  line(header_);
  for (const auto& r : rows_) {
    if (r.size() != header_.size()) throw Error(ErrorCode::SchemaMismatch, "CSV row width differs from header");
    line(r);
  }
  return out;
}

void CsvTable::save(const fs::path& path) const { write_file(path, str()); }

int CsvData::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

std::vector<double> CsvData::numeric(int col) const {
  if (col < 0 || col >= static_cast<int>(header.size()))
    throw Error(ErrorCode::SchemaMismatch, "CSV column index out of range");
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    const std::string& cell = r[static_cast<std::size_t>(col)];
    double v = 0.0;
    const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || p != cell.data() + cell.size())
      throw Error(ErrorCode::SchemaMismatch, "non-numeric CSV cell '" + cell + "' in column " + header[static_cast<std::size_t>(col)]);
    out.push_back(v);
  }
  return out;
}

CsvData parse_csv(const std::string& text) {
  CsvData d;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (first) {
      d.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != d.header.size()) throw Error(ErrorCode::SchemaMismatch, "CSV row width differs from header");
      d.rows.push_back(std::move(cells));
    }
  }
  if (first) throw Error(ErrorCode::SchemaMismatch, "CSV has no header row");
  return d;
}

// ---- manifest ------------------------------------------------------------

std::string file_sha256(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string json_hash(const nlohmann::json& j) { return sha256_hex(j.dump()); }

void RunManifest::add_artifact(const fs::path& root, const fs::path& file) {
  artifacts.push_back({fs::relative(file, root).generic_string(), file_sha256(file), fs::file_size(file)});
}

std::vector<std::string> RunManifest::verify(const fs::path& root) const {
  std::vector<std::string> bad;
  for (const auto& a : artifacts) {
    const fs::path p = root / a.path;
    if (!fs::exists(p) || file_sha256(p) != a.sha256) bad.push_back(a.path);
  }
  return bad;
}

void RunManifest::save(const fs::path& path) const {
  nlohmann::json arts = nlohmann::json::array();
  for (const auto& a : artifacts) arts.push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
  write_json(path, {{"schema", "dynlab.manifest.v1"},
                    {"config_hash", config_hash},
                    {"tool_version", tool_version},
                    {"command", command},
                    {"artifacts", arts},
                    {"timings_s", timings}});
}

RunManifest RunManifest::load(const fs::path& path) {
  const auto j = read_json(path);
  if (j.value("schema", std::string()) != "dynlab.manifest.v1")
    throw Error(ErrorCode::SchemaMismatch, "not a dynlab.manifest.v1 document");
  RunManifest m;
  m.config_hash = j.at("config_hash").get<std::string>();
  m.tool_version = j.at("tool_version").get<std::string>();
  m.command = j.value("command", std::string());
  for (const auto& a : j.at("artifacts"))
    m.artifacts.push_back({a.at("path").get<std::string>(), a.at("sha256").get<std::string>(), a.at("bytes").get<std::uintmax_t>()});
  m.timings = j.at("timings_s").get<std::map<std::string, double>>();
  return m;
}

}  // namespace dynlab
