#include "dynlab/stability.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "dynlab/error.hpp"
#include "dynlab/parallel.hpp"
#include "dynlab/rng.hpp"

namespace dynlab {

SpectrumRecord spectrum_of(const Mat& jacobian, int step_index) {
  if (jacobian.rows() != jacobian.cols()) throw Error(ErrorCode::ShapeMismatch, "Jacobian must be square");
  SpectrumRecord rec;
  rec.step_index = step_index;
  if (jacobian.size() == 0) return rec;
  Eigen::EigenSolver<Mat> solver(jacobian, false);
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::NotConverged, "eigenvalue iteration did not converge");
  const auto& ev = solver.eigenvalues();
  rec.eigenvalues.assign(ev.data(), ev.data() + ev.size());
  rec.max_real = -std::numeric_limits<double>::infinity();
  for (const auto& l : rec.eigenvalues) {
    rec.max_real = std::max(rec.max_real, l.real());
    rec.spectral_radius = std::max(rec.spectral_radius, std::abs(l));
  }
  return rec;
}

Mat jacobian_vector_field(const PolicyParams& params, const Vec& h) {
  const int n = params.dims.hidden;
  if (h.size() != n) throw Error(ErrorCode::DimensionMismatch, "hidden state size mismatch");
  const Mat w = params.tanh_block_rec();
  const Vec pre = w * h + params.tanh_block_bias();
  const Vec slope = 1.0 - pre.array().tanh().square();
  return slope.asDiagonal() * w - Mat::Identity(n, n);
}

Mat numerical_jacobian(const std::function<Vec(const Vec&)>& map, const Vec& x, double step) {
  if (!(step > 0.0)) throw Error(ErrorCode::InvalidArgument, "difference step must be positive");
  const Vec y0 = map(x);
  Mat jac(y0.size(), x.size());
  Vec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + step;
    const Vec plus = map(xp);
    xp[i] = x[i] - step;
    const Vec minus = map(xp);
    xp[i] = x[i];
    jac.col(i) = (plus - minus) / (2.0 * step);
  }
  return jac;
}

Mat jacobian_discrete_map(const PolicyParams& params, const Vec& h, const Observation& obs, double step) {
  return numerical_jacobian([&](const Vec& x) { return recurrent_step(params, x, obs); }, h, step);
}

std::vector<SpectrumRecord> cycle_spectrum(const PolicyParams& params, const LimitCycle& cycle, SpectrumMode mode) {
  if (cycle.states.size() != cycle.observations.size())
    throw Error(ErrorCode::LengthMismatch, "cycle states and observations differ in length");
  std::vector<SpectrumRecord> out;
  out.reserve(cycle.states.size());
  for (std::size_t t = 0; t < cycle.states.size(); ++t) {
    const Mat jac = mode == SpectrumMode::VectorField ? jacobian_vector_field(params, cycle.states[t])
                                                      : jacobian_discrete_map(params, cycle.states[t], cycle.observations[t]);
    out.push_back(spectrum_of(jac, static_cast<int>(t)));
  }
  return out;
}

bool is_stable(const SpectrumRecord& rec, SpectrumMode mode) {
  return mode == SpectrumMode::VectorField ? rec.max_real < 0.0 : rec.spectral_radius < 1.0;
}

ContractionEstimate stroboscopic_check(const std::vector<StepMap>& maps, const Vec& h_star,
                                       const StroboscopicOptions& options) {
  if (options.probes <= 0) throw Error(ErrorCode::InvalidArgument, "stroboscopic check needs probes > 0");
  if (maps.empty()) throw Error(ErrorCode::Empty, "empty observation cycle");
  if (!(options.probe_radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "probe radius must be positive");
  ContractionEstimate est;
  est.period = static_cast<int>(maps.size());
  est.fixed_point = h_star;

  std::vector<Vec> orbit{h_star};
  for (std::size_t t = 0; t < maps.size(); ++t) orbit.push_back(maps[t](orbit.back(), static_cast<int>(t)));
  est.fixed_point_residual = (orbit.back() - h_star).norm();

  est.per_step_lipschitz.assign(maps.size(), 0.0);
  parallel_for(maps.size(), options.threads, [&](std::size_t t) {
    Rng rng(derive_seed(options.seed, t));
    double worst = 0.0;
    for (int p = 0; p < options.probes; ++p) {
      const Vec a = orbit[t] + options.probe_radius * unit_direction(rng, h_star.size());
      const Vec b = orbit[t] + options.probe_radius * unit_direction(rng, h_star.size());
      const double in = (a - b).norm();
      if (in == 0.0) continue;
      const int k = static_cast<int>(t);
      worst = std::max(worst, (maps[t](a, k) - maps[t](b, k)).norm() / in);
    }
    est.per_step_lipschitz[t] = worst;
  });
  est.product_bound = 1.0;
  for (double l : est.per_step_lipschitz) est.product_bound *= l;
  return est;
}

ContractionEstimate stroboscopic_check(const PolicyParams& params, std::span<const Observation> obs_cycle,
                                       const Vec& h_star, const StroboscopicOptions& options) {
  std::vector<StepMap> maps;
  maps.reserve(obs_cycle.size());
  for (const Observation& o : obs_cycle)
    maps.push_back([&params, o](const Vec& h, int) { return recurrent_step(params, h, o); });
  return stroboscopic_check(maps, h_star, options);
}

}  // namespace dynlab
