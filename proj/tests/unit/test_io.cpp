#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <regex>

#include <nlohmann/json.hpp>

#include "dynlab/blob.hpp"
#include "dynlab/error.hpp"
#include "dynlab/io.hpp"
#include "dynlab/plot.hpp"
#include "helpers.hpp"

using namespace dynlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("dynlab_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Tag-balance check: every element closes in order, attributes are quoted,
// text holds no raw '<' or unescaped '&'.
bool well_formed_xml(const std::string& s) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  bool root_seen = false;
  while (i < s.size()) {
    if (s[i] == '<') {
      const std::size_t end = s.find('>', i);
      if (end == std::string::npos) return false;
      const std::string tag = s.substr(i + 1, end - i - 1);
      i = end + 1;
      if (tag.starts_with("?") || tag.starts_with("!")) continue;
      if (tag.starts_with("/")) {
        if (stack.empty() || stack.back() != tag.substr(1)) return false;
        stack.pop_back();
        continue;
      }
      const std::string name = tag.substr(0, tag.find_first_of(" \t\n/"));
      static const std::regex attrs(R"(^[A-Za-z][\w:-]*(\s+[\w:-]+="[^"<]*")*\s*/?$)");
      if (!std::regex_match(tag, attrs)) return false;
      if (stack.empty() && root_seen) return false;
      root_seen = true;
      if (!tag.ends_with("/")) stack.push_back(name);
    } else {
      if (s[i] == '&') {
        const std::size_t semi = s.find(';', i);
        if (semi == std::string::npos) return false;
        const std::string ent = s.substr(i, semi - i + 1);
        if (ent != "&amp;" && ent != "&lt;" && ent != "&gt;" && ent != "&quot;" && ent != "&apos;") return false;
      }
      ++i;
    }
  }
  return root_seen && stack.empty();
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("sha256 and base64 known vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const std::pair<const char*, const char*> rfc[] = {{"", ""},         {"f", "Zg=="},         {"fo", "Zm8="},
                                                     {"foo", "Zm9v"},   {"foob", "Zm9vYg=="},  {"fooba", "Zm9vYmE="},
                                                     {"foobar", "Zm9vYmFy"}};
  for (auto [plain, enc] : rfc) {
    CHECK(base64_encode(plain) == enc);
    CHECK(base64_decode(enc) == plain);
  }
  CHECK_THROWS_AS(base64_decode("Zm9v!"), Error);
}

TEST_CASE("matrix and vector blobs round trip exactly") {
  Mat m = testing::random_mat(7, 3, 1);
  m(0, 0) = -0.0;
  m(1, 1) = std::numeric_limits<double>::denorm_min();
  m(2, 2) = 1e300;
  const Mat back = matrix_from_blob(matrix_blob(m));
  REQUIRE(back.rows() == 7);
  REQUIRE(back.cols() == 3);
  CHECK(std::memcmp(back.data(), m.data(), sizeof(double) * 21) == 0);
  const Vec v = testing::random_vec(11, 2);
  CHECK(vector_from_blob(vector_blob(v)) == v);
  CHECK(matrix_from_blob(matrix_blob(Mat(0, 4))).cols() == 4);
  nlohmann::json bad = matrix_blob(m);
  bad["rows"] = 8;
  CHECK_THROWS_AS(matrix_from_blob(bad), Error);
}

TEST_CASE("csv round trip") {
  CsvTable t({"name", "value", "count"});
  const double values[] = {0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0};
  int i = 0;
  for (double v : values) t.row().add("r" + std::to_string(i)).add(v).add(i++);
  t.row().add(std::string("plain")).add(2.5).add(std::uint64_t{18446744073709551615ULL});
  const CsvData d = parse_csv(t.str());
  REQUIRE(d.header == std::vector<std::string>{"name", "value", "count"});
  REQUIRE(d.rows.size() == 6u);
  CHECK(d.column("value") == 1);
  CHECK(d.column("missing") == -1);
  const std::vector<double> got = d.numeric(1);
  for (std::size_t k = 0; k < 5; ++k) CHECK(got[k] == values[k]);
  CHECK(d.rows[5][0] == "plain");
  CsvTable bad({"a"});
  CHECK_THROWS_AS(bad.row().add(std::string("x,y")), Error);
  CHECK(d.rows[5][2] == "18446744073709551615");
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::stod(format_double(1.0 / 7.0)) == 1.0 / 7.0);
}

TEST_CASE("manifest records hashes and detects tampering") {
  const fs::path dir = scratch_dir("manifest");
  write_file(dir / "a.txt", "abc");
  fs::create_directories(dir / "sub");
  write_file(dir / "sub" / "b.csv", "x\n1\n");
  RunManifest m;
  m.command = "test";
  m.config_hash = json_hash(nlohmann::json{{"k", 1}});
  m.add_artifact(dir, dir / "a.txt");
  m.add_artifact(dir, dir / "sub" / "b.csv");
  m.timings["total"] = 1.5;
  CHECK(m.artifacts[0].path == "a.txt");
  CHECK(m.artifacts[0].sha256 == sha256_hex("abc"));
  CHECK(m.artifacts[0].bytes == 3u);
  CHECK(m.artifacts[1].path == "sub/b.csv");
  m.save(dir / "manifest.json");
  const RunManifest back = RunManifest::load(dir / "manifest.json");
  CHECK(back.config_hash == m.config_hash);
  CHECK(back.artifacts.size() == 2u);
  CHECK(back.verify(dir).empty());
  write_file(dir / "sub" / "b.csv", "x\n2\n");
  CHECK(back.verify(dir) == std::vector<std::string>{"sub/b.csv"});
  fs::remove(dir / "a.txt");
  CHECK(back.verify(dir).size() == 2u);
  CHECK(json_hash(nlohmann::json{{"a", 1}, {"b", 2}}) == json_hash(nlohmann::json::parse(R"({"b":2,"a":1})")));
  CHECK(file_sha256(dir / "manifest.json").size() == 64u);

  // relative roots resolve against the working directory
  const fs::path cwd = fs::current_path();
  fs::current_path(dir);
  write_file(fs::path("rel") / "c.txt", "c");
  RunManifest rel;
  rel.add_artifact("rel", fs::path("rel") / "c.txt");
  CHECK(rel.artifacts[0].path == "c.txt");
  CHECK(rel.verify("rel").empty());
  fs::current_path(cwd);
}

TEST_CASE("experiment config json round trip and validation") {
  ExperimentConfig c;
  c.seed = 42;
  c.es.generations = 7;
  c.es.optimizer = EsOptimizer::Adam;
  c.es.dims.hidden = 16;
  c.es.maze.width = 9;
  c.ftli.eps = 1e-7;
  c.perturb.eps = {0.2, 0.3};
  c.cca.options.k_cca = 6;
  c.counterfactual.cutoff_k = 5;
  const nlohmann::json j = c;
  CHECK(j.at("schema") == kConfigSchema);
  const ExperimentConfig back = j.get<ExperimentConfig>();
  CHECK(nlohmann::json(back) == j);
  CHECK(back.es.dims.hidden == 16);
  CHECK(back.es.maze.width == 9);
  CHECK(back.perturb.eps == std::vector<double>{0.2, 0.3});
  back.validate();

  nlohmann::json wrong = j;
  wrong["schema"] = "other.v9";
  CHECK_THROWS_AS(wrong.get<ExperimentConfig>(), Error);

  ExperimentConfig bad = c;
  bad.counterfactual.cutoff_k = 7;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.es.population_size = 5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.checkpoint = "/nonexistent/ckpt";
  CHECK_THROWS_AS(bad.validate(), Error);

  const fs::path dir = scratch_dir("config");
  write_json(dir / "cfg.json", j);
  CHECK(nlohmann::json(load_config(dir / "cfg.json")) == j);
  write_file(dir / "partial.json", R"({"schema": "dynlab.experiment.v1", "seed": 9, "es": {"generations": 3}})");
  const ExperimentConfig partial = load_config(dir / "partial.json");
  CHECK(partial.seed == 9u);
  CHECK(partial.es.generations == 3);
  CHECK(partial.es.population_size == ExperimentConfig{}.es.population_size);
  CHECK_THROWS_AS(read_file(dir / "missing.json"), Error);
}

TEST_CASE("plots are well-formed svg") {
  Series scatter{"points", {}, {}};
  for (int k = 0; k < 2000; ++k) {
    scatter.x.push_back(std::sin(k * 0.37));
    scatter.y.push_back(std::cos(k * 0.11) * 3.0);
  }
  PlotStyle st;
  st.title = "x < y & \"z\"";
  const std::string svg = emit_plot(PlotKind::Scatter, {scatter}, st);
  CHECK(well_formed_xml(svg));
  CHECK((svg.starts_with("<svg") || svg.starts_with("<?xml")));
  CHECK(count(svg, "<circle") == 2000u);
  CHECK(svg.find("x &lt; y &amp; &quot;z&quot;") != std::string::npos);

  const std::string empty = emit_plot(PlotKind::Histogram, {}, {});
  CHECK(well_formed_xml(empty));
  CHECK(empty.find("no data") != std::string::npos);

  Series a{"cold", {}, {1, 2, 2, 3, 3, 3, 10}};
  Series b{"full", {}, {1, 1, 2}};
  const std::string hist = emit_plot(PlotKind::Histogram, {a, b});
  CHECK(well_formed_xml(hist));
  CHECK(hist.find(">cold<") != std::string::npos);
  CHECK(hist.find(">full<") != std::string::npos);

  Series line{"rho", {1, 2, 3, 4}, {0.9, 0.5, 0.2, 0.01}};
  st.log_y = true;
  for (PlotKind k : {PlotKind::Spectrum, PlotKind::Recovery}) CHECK(well_formed_xml(emit_plot(k, {line}, st)));
  Series ragged{"r", {1, 2}, {1}};
  CHECK_THROWS_AS(emit_plot(PlotKind::Scatter, {ragged}), Error);
  Series nan{"n", {1, 2}, {1, std::nan("")}};
  CHECK(well_formed_xml(emit_plot(PlotKind::Scatter, {nan})));
}

TEST_CASE("plot kind names") {
  CHECK(plot_kind_from_name("hist") == PlotKind::Histogram);
  CHECK(plot_kind_from_name("histogram") == PlotKind::Histogram);
  CHECK(plot_kind_from_name("scatter") == PlotKind::Scatter);
  CHECK(plot_kind_from_name("spectrum") == PlotKind::Spectrum);
  CHECK(plot_kind_from_name("recovery") == PlotKind::Recovery);
  CHECK_THROWS_AS(plot_kind_from_name("pie"), Error);
  CHECK(xml_escape("<a&b>") == "&lt;a&amp;b&gt;");
}

TEST_CASE("seed override from the environment") {
  ::unsetenv("RNN_DYNLAB_SEED");
  CHECK(seed_override(5) == 5u);
  ::setenv("RNN_DYNLAB_SEED", "77", 1);
  CHECK(seed_override(5) == 77u);
  ::setenv("RNN_DYNLAB_SEED", "nope", 1);
  CHECK_THROWS_AS(seed_override(5), Error);
  ::unsetenv("RNN_DYNLAB_SEED");
}
