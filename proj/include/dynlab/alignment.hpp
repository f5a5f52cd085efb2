#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dynlab/maze.hpp"
#include "dynlab/types.hpp"

namespace dynlab {

// ---- PCA -----------------------------------------------------------------

struct PcaModel {
  Vec mean;
  Mat components;  // d x k, orthonormal columns
  Vec explained_variance;  // k, non-increasing
  double total_variance = 0.0;
  bool truncated = false;  // fewer than the requested k non-zero singular values
  int k() const { return static_cast<int>(components.cols()); }
};

struct PcaOptions {
  bool strict = false;  // throw RankDeficient instead of truncating
  double rank_tolerance = 1e-10;  // relative to the largest singular value
};

// Thin SVD of the centered data. Each component's sign is fixed so that its
// largest-magnitude entry is positive.
PcaModel pca_fit(const Mat& x, int k, const PcaOptions& options = {});
Mat pca_transform(const PcaModel& model, const Mat& x);
Mat pca_inverse(const PcaModel& model, const Mat& scores);

// ---- CCA -----------------------------------------------------------------

enum class Side { Neural, Behavior };

struct CcaOptions {
  int k_x = 50;
  int k_y = 50;
  int k_cca = 10;
  double ridge = 1e-6;  // relative to the mean covariance diagonal
};

struct CcaModel {
  PcaModel x_pca;
  PcaModel y_pca;
  Vec x_scale;
  Vec y_scale;
  Mat u;  // k_x x k_cca
  Mat v;  // k_y x k_cca
  Vec rho;
  Mat u_pinv;  // k_cca x k_x
  Mat v_pinv;
  double ridge = 0.0;
  int k_cca() const { return static_cast<int>(rho.size()); }
};

CcaModel cca_fit(const Mat& x, const Mat& y, const CcaOptions& options = {});
// Rows are samples.
Mat cca_project(const CcaModel& model, Side side, const Mat& rows);
Vec cca_project(const CcaModel& model, Side side, const Vec& row);
Mat cca_inverse(const CcaModel& model, Side side, const Mat& z);
Vec cca_inverse(const CcaModel& model, Side side, const Vec& z);

// Pearson correlation of each paired variate column on the given rows.
Vec variate_correlations(const CcaModel& model, const Mat& x, const Mat& y);

struct PermutationNull {
  std::vector<Vec> rho;  // one spectrum per shuffle
  Vec quantile(double q) const;  // per-mode quantile
};
PermutationNull cca_permutation_null(const Mat& x, const Mat& y, const CcaOptions& options, int shuffles,
                                     std::uint64_t seed);

// ---- RSA -----------------------------------------------------------------

struct DistanceMatrix {
  int n = 0;
  Mat d;
};

DistanceMatrix pairwise_distances(const Mat& rows);
double rsa_pearson(const DistanceMatrix& a, const DistanceMatrix& b);
// Same matrix with rows/columns relabelled by `perm`.
DistanceMatrix permuted(const DistanceMatrix& m, std::span<const int> perm);

// ---- action-constrained control ---------------------------------------------

// Hidden states whose greedy readout reproduces `target_actions`: v ~ N(0, I)
// is orthogonalized against the non-target readout rows, then shifted along
// the target row's residual direction until the target logit leads every
// other logit by `margin`.
std::vector<Vec> pseudo_manifold(std::span<const Action> target_actions, const Mat& w_out, const Vec& b_out, int dim,
                                 double margin, std::uint64_t seed);

struct ControlResult {
  Vec trained_rho;
  Vec control_rho;
  Mat trained_variates_x;  // n x k_cca, neural side
  Mat trained_variates_y;
  Mat control_variates_x;
  Mat control_variates_y;
};

// control_centroids pairs row-for-row with behavior (same BPFs as the
// trained centroids).
ControlResult control_experiment(const Mat& trained_centroids, const Mat& control_centroids, const Mat& behavior,
                                 const CcaOptions& options = {});

void to_json(nlohmann::json& j, const PcaModel& m);
void from_json(const nlohmann::json& j, PcaModel& m);
void to_json(nlohmann::json& j, const CcaModel& m);
void from_json(const nlohmann::json& j, CcaModel& m);

}  // namespace dynlab
