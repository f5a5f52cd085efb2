#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dynlab/maze.hpp"
#include "dynlab/types.hpp"

namespace dynlab {

enum class BpfMetric { L1, L2, L3 };
std::string_view metric_name(BpfMetric m);
BpfMetric metric_from_name(std::string_view name);

struct BpfConfig {
  int grid_h = 21;
  int grid_w = 21;
  double alpha = 1.0;
  double beta = 0.1;
  double r_eff = 6.0;
  BpfMetric metric = BpfMetric::L2;

  void validate() const;
  friend bool operator==(const BpfConfig&, const BpfConfig&) = default;
};

struct GridPoint {
  double x = 0.0;  // column
  double y = 0.0;  // row
};

// Maze cell (row, col) -> grid point (2 col, 2 row).
GridPoint maze_to_grid(Cell c);
std::vector<GridPoint> maze_to_grid(std::span<const Cell> cells);

struct BehavioralField {
  BpfConfig config;
  RowMat values;  // grid_h x grid_w

  Eigen::Map<const Vec> flat() const { return {values.data(), values.size()}; }
};

// Linear radiance field per point, truncated at r_eff, max-fused.
BehavioralField build_bpf(std::span<const GridPoint> points, const BpfConfig& cfg = {});
BehavioralField build_bpf_cells(std::span<const Cell> cells, const BpfConfig& cfg = {});

double bpf_distance(const BehavioralField& a, const BehavioralField& b);

struct ScenarioDistances {
  double d12 = 0.0;
  double d13 = 0.0;
  bool ordered() const { return d12 < d13; }
};

struct AppHReport {
  ScenarioDistances non_overlap;
  ScenarioDistances detour;
  double identical = 0.0;  // distance between a path and an exact copy
  bool ok() const { return non_overlap.ordered() && detour.ordered() && identical == 0.0; }
};

// Synthetic validation: three parallel paths (near pair + distant third),
// and a reference path against a minor and a major detour sharing its
// endpoints.
AppHReport app_h_scenarios(const BpfConfig& cfg = {});

void to_json(nlohmann::json& j, const BpfConfig& cfg);
void from_json(const nlohmann::json& j, BpfConfig& cfg);

}  // namespace dynlab
