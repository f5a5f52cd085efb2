#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "dynlab/bpf.hpp"
#include "dynlab/error.hpp"
#include "helpers.hpp"

using namespace dynlab;

namespace {

double metric_distance(double dx, double dy, BpfMetric m) {
  switch (m) {
    case BpfMetric::L1: return std::abs(dx) + std::abs(dy);
    case BpfMetric::L2: return std::sqrt(dx * dx + dy * dy);
    case BpfMetric::L3: return std::cbrt(std::pow(std::abs(dx), 3) + std::pow(std::abs(dy), 3));
  }
  return 0.0;
}

// The field is a decreasing function of the distance to the nearest point,
// so max-fusion equals the profile at the minimum distance.
RowMat oracle_field(const std::vector<GridPoint>& pts, const BpfConfig& cfg) {
  RowMat out = RowMat::Zero(cfg.grid_h, cfg.grid_w);
  for (int r = 0; r < cfg.grid_h; ++r)
    for (int c = 0; c < cfg.grid_w; ++c) {
      double dmin = INFINITY;
      for (const auto& p : pts) dmin = std::min(dmin, metric_distance(c - p.x, r - p.y, cfg.metric));
      if (dmin < cfg.r_eff) out(r, c) = cfg.beta + (cfg.alpha - cfg.beta) * (1.0 - dmin / cfg.r_eff);
    }
  return out;
}

}  // namespace

TEST_CASE("maze_to_grid") {
  const GridPoint g = maze_to_grid(Cell{3, 7});
  CHECK(g.x == 14.0);
  CHECK(g.y == 6.0);
}

TEST_CASE("build_bpf: single point") {
  BpfConfig cfg;
  const std::vector<GridPoint> p{{10, 10}};
  const BehavioralField f = build_bpf(p, cfg);
  CHECK(std::abs(f.values(10, 10) - cfg.alpha) < 1e-12);
  CHECK(f.values.maxCoeff() == f.values(10, 10));
  for (int r = 0; r < 21; ++r)
    for (int c = 0; c < 21; ++c)
      if (std::hypot(c - 10.0, r - 10.0) >= cfg.r_eff) CHECK(f.values(r, c) == 0.0);
  cfg.alpha = 2.5;
  cfg.beta = 0.3;
  CHECK(std::abs(build_bpf(p, cfg).values(10, 10) - 2.5) < 1e-12);
}

TEST_CASE("build_bpf: matches the nearest-point oracle") {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  for (BpfMetric m : {BpfMetric::L1, BpfMetric::L2, BpfMetric::L3}) {
    BpfConfig cfg;
    cfg.metric = m;
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<GridPoint> pts;
      for (int i = 0; i < 1 + trial; ++i) pts.push_back({u(rng), u(rng)});
      CHECK((build_bpf(pts, cfg).values - oracle_field(pts, cfg)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("build_bpf: duplicate points are idempotent") {
  const std::vector<GridPoint> one{{4, 6}}, two{{4, 6}, {4, 6}};
  CHECK(build_bpf(one).values == build_bpf(two).values);
  CHECK_THROWS_AS(build_bpf(std::vector<GridPoint>{}), Error);
}

TEST_CASE("bpf_distance") {
  const std::vector<Cell> a{{0, 0}, {0, 1}, {1, 1}}, b{{5, 5}, {6, 5}};
  const auto fa = build_bpf_cells(a), fb = build_bpf_cells(b);
  CHECK(bpf_distance(fa, fa) == 0.0);
  CHECK(bpf_distance(fa, fb) == bpf_distance(fb, fa));
  CHECK(bpf_distance(fa, fb) > 0.0);
  BpfConfig other;
  other.r_eff = 4.0;
  CHECK_THROWS_AS(bpf_distance(fa, build_bpf_cells(b, other)), Error);
}

TEST_CASE("App. H scenario orderings") {
  const AppHReport r = app_h_scenarios();
  CHECK(r.non_overlap.d12 < r.non_overlap.d13);
  CHECK(r.detour.d12 < r.detour.d13);
  CHECK(r.identical == 0.0);
  CHECK(r.ok());
  for (BpfMetric m : {BpfMetric::L1, BpfMetric::L3}) {
    BpfConfig cfg;
    cfg.metric = m;
    CHECK(app_h_scenarios(cfg).ok());
  }
}

TEST_CASE("BpfConfig validation and JSON") {
  BpfConfig cfg;
  cfg.metric = BpfMetric::L1;
  cfg.r_eff = 4.5;
  const BpfConfig back = nlohmann::json(cfg).get<BpfConfig>();
  CHECK(back == cfg);
  CHECK(metric_from_name(metric_name(BpfMetric::L3)) == BpfMetric::L3);
  CHECK_THROWS_AS(metric_from_name("L7"), Error);
  cfg.r_eff = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = BpfConfig{};
  cfg.grid_w = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
