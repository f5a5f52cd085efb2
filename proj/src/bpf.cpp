#include "dynlab/bpf.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "dynlab/error.hpp"

namespace dynlab {

std::string_view metric_name(BpfMetric m) {
  switch (m) {
    case BpfMetric::L1: return "L1";
    case BpfMetric::L2: return "L2";
    case BpfMetric::L3: return "L3";
  }
  return "L2";
}

BpfMetric metric_from_name(std::string_view name) {
  if (name == "L1" || name == "l1") return BpfMetric::L1;
  if (name == "L2" || name == "l2") return BpfMetric::L2;
  if (name == "L3" || name == "l3") return BpfMetric::L3;
  throw Error(ErrorCode::InvalidArgument, "unknown BPF metric: " + std::string(name));
}

void BpfConfig::validate() const {
  if (grid_h <= 0 || grid_w <= 0) throw Error(ErrorCode::InvalidArgument, "BPF grid must be non-empty");
  if (!(alpha > beta) || !(beta >= 0.0)) throw Error(ErrorCode::InvalidArgument, "BPF needs alpha > beta >= 0");
  if (!(r_eff > 0.0)) throw Error(ErrorCode::InvalidArgument, "BPF r_eff must be positive");
}

GridPoint maze_to_grid(Cell c) { return {2.0 * c.col, 2.0 * c.row}; }

std::vector<GridPoint> maze_to_grid(std::span<const Cell> cells) {
  std::vector<GridPoint> out;
  out.reserve(cells.size());
  for (Cell c : cells) out.push_back(maze_to_grid(c));
  return out;
}

namespace {

double point_distance(double dx, double dy, BpfMetric m) {
  dx = std::abs(dx);
  dy = std::abs(dy);
  switch (m) {
    case BpfMetric::L1: return dx + dy;
    case BpfMetric::L2: return std::sqrt(dx * dx + dy * dy);
    case BpfMetric::L3: return std::cbrt(dx * dx * dx + dy * dy * dy);
  }
  return 0.0;
}

}  // namespace

BehavioralField build_bpf(std::span<const GridPoint> points, const BpfConfig& cfg) {
  cfg.validate();
  if (points.empty()) throw Error(ErrorCode::EmptyTrajectory, "BPF needs at least one point");
  BehavioralField field{cfg, RowMat::Zero(cfg.grid_h, cfg.grid_w)};
  for (const GridPoint& p : points) {
    for (int r = 0; r < cfg.grid_h; ++r) {
      for (int c = 0; c < cfg.grid_w; ++c) {
        const double d = point_distance(c - p.x, r - p.y, cfg.metric);
        if (d >= cfg.r_eff) continue;
        const double v = (cfg.alpha - cfg.beta) * (cfg.r_eff - d) / cfg.r_eff + cfg.beta;
        field.values(r, c) = std::max(field.values(r, c), v);
      }
    }
  }
  return field;
}

BehavioralField build_bpf_cells(std::span<const Cell> cells, const BpfConfig& cfg) {
  const auto pts = maze_to_grid(cells);
  return build_bpf(pts, cfg);
}

double bpf_distance(const BehavioralField& a, const BehavioralField& b) {
  if (!(a.config == b.config) || a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols())
    throw Error(ErrorCode::ConfigMismatch, "BPFs built with different configurations");
  return (a.values - b.values).norm();
}

namespace {

std::vector<GridPoint> polyline(std::initializer_list<GridPoint> corners) {
  // Unit-spaced samples along straight segments between corners.
  std::vector<GridPoint> pts;
  const std::vector<GridPoint> c(corners);
  pts.push_back(c.front());
  for (std::size_t i = 1; i < c.size(); ++i) {
    const double dx = c[i].x - c[i - 1].x, dy = c[i].y - c[i - 1].y;
    const int n = static_cast<int>(std::ceil(std::max(std::abs(dx), std::abs(dy))));
    for (int k = 1; k <= n; ++k) pts.push_back({c[i - 1].x + dx * k / n, c[i - 1].y + dy * k / n});
  }
  return pts;
}

}  // namespace

AppHReport app_h_scenarios(const BpfConfig& cfg) {
  AppHReport report;
  {
    const auto t1 = build_bpf(polyline({{2, 4}, {18, 4}}), cfg);
    const auto t2 = build_bpf(polyline({{2, 8}, {18, 8}}), cfg);
    const auto t3 = build_bpf(polyline({{2, 16}, {18, 16}}), cfg);
    report.non_overlap = {bpf_distance(t1, t2), bpf_distance(t1, t3)};
    report.identical = bpf_distance(t1, build_bpf(polyline({{2, 4}, {18, 4}}), cfg));
  }
  {
    const auto t1 = build_bpf(polyline({{2, 10}, {18, 10}}), cfg);
    const auto t2 = build_bpf(polyline({{2, 10}, {7, 10}, {7, 7}, {13, 7}, {13, 10}, {18, 10}}), cfg);
    const auto t3 = build_bpf(polyline({{2, 10}, {5, 10}, {5, 2}, {15, 2}, {15, 10}, {18, 10}}), cfg);
    report.detour = {bpf_distance(t1, t2), bpf_distance(t1, t3)};
  }
  return report;
}

void to_json(nlohmann::json& j, const BpfConfig& cfg) {
  j = nlohmann::json{{"grid_h", cfg.grid_h}, {"grid_w", cfg.grid_w}, {"alpha", cfg.alpha},
                     {"beta", cfg.beta},     {"r_eff", cfg.r_eff},   {"metric", metric_name(cfg.metric)}};
}

void from_json(const nlohmann::json& j, BpfConfig& cfg) {
  BpfConfig d;
  cfg.grid_h = j.value("grid_h", d.grid_h);
  cfg.grid_w = j.value("grid_w", d.grid_w);
  cfg.alpha = j.value("alpha", d.alpha);
  cfg.beta = j.value("beta", d.beta);
  cfg.r_eff = j.value("r_eff", d.r_eff);
  cfg.metric = metric_from_name(j.value("metric", std::string(metric_name(d.metric))));
  cfg.validate();
}

}  // namespace dynlab
