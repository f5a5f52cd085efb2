#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dynlab/cycles.hpp"
#include "dynlab/hds.hpp"
#include "dynlab/policy.hpp"

namespace dynlab {

struct SpectrumRecord {
  int step_index = 0;
  std::vector<std::complex<double>> eigenvalues;
  double max_real = 0.0;
  double spectral_radius = 0.0;
};

SpectrumRecord spectrum_of(const Mat& jacobian, int step_index = 0);

// J_F(h) = diag(1 - tanh^2(W h + b)) W - I for F(h) = tanh(W h + b) - h
// over the tanh block.
Mat jacobian_vector_field(const PolicyParams& params, const Vec& h);

inline constexpr double kJacobianStep = 1e-6;

// Central differences of an arbitrary map.
Mat numerical_jacobian(const std::function<Vec(const Vec&)>& map, const Vec& x, double step = kJacobianStep);
Mat jacobian_discrete_map(const PolicyParams& params, const Vec& h, const Observation& obs,
                          double step = kJacobianStep);

enum class SpectrumMode { VectorField, DiscreteMap };

std::vector<SpectrumRecord> cycle_spectrum(const PolicyParams& params, const LimitCycle& cycle, SpectrumMode mode);

// VectorField: max_real < 0; DiscreteMap: spectral_radius < 1.
bool is_stable(const SpectrumRecord& rec, SpectrumMode mode);

struct ContractionEstimate {
  int period = 0;
  std::vector<double> per_step_lipschitz;
  double product_bound = 0.0;
  double fixed_point_residual = 0.0;
  Vec fixed_point;
};

struct StroboscopicOptions {
  int probes = 64;
  double probe_radius = 1e-3;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

// Per-step maps F_t, t = 0..T-1, composed into the stroboscopic map S.
// h_star is taken as a point of the orbit (phase 0). Each probe pair is
// (h_t + r u, h_t + r u') with u, u' uniform on the unit sphere; the per-step
// Lipschitz estimate is the largest output/input separation ratio.
ContractionEstimate stroboscopic_check(const std::vector<StepMap>& maps, const Vec& h_star,
                                       const StroboscopicOptions& options = {});
ContractionEstimate stroboscopic_check(const PolicyParams& params, std::span<const Observation> obs_cycle,
                                       const Vec& h_star, const StroboscopicOptions& options = {});

}  // namespace dynlab
