#include "dynlab/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "dynlab/blob.hpp"
#include "dynlab/error.hpp"
#include "dynlab/rng.hpp"

namespace dynlab {

// ---- PCA -----------------------------------------------------------------

PcaModel pca_fit(const Mat& x, int k, const PcaOptions& options) {
  const auto n = x.rows();
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "PCA needs k >= 1");
  if (k > x.cols()) throw Error(ErrorCode::InvalidArgument, "PCA k exceeds the data dimension");
  if (n <= k) throw Error(ErrorCode::InvalidArgument, "PCA needs more samples than components");
  PcaModel model;
  model.mean = x.colwise().mean().transpose();
  const Mat centered = x.rowwise() - model.mean.transpose();
  Eigen::BDCSVD<Mat> svd(centered, Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  int rank = 0;
  const double tol = options.rank_tolerance * (s.size() ? s[0] : 0.0);
  while (rank < s.size() && s[rank] > tol) ++rank;
  int kept = k;
  if (rank < k) {
    if (options.strict)
      throw Error(ErrorCode::RankDeficient, "data has rank " + std::to_string(rank) + " < k = " + std::to_string(k));
    kept = std::max(rank, 1);
    model.truncated = true;
  }
  model.components = svd.matrixV().leftCols(kept);
  for (int c = 0; c < kept; ++c) {
    Eigen::Index arg;
    model.components.col(c).cwiseAbs().maxCoeff(&arg);
    if (model.components(arg, c) < 0) model.components.col(c) *= -1.0;
  }
  const double denom = static_cast<double>(n - 1);
  model.explained_variance = s.head(kept).array().square() / denom;
  model.total_variance = s.squaredNorm() / denom;
  return model;
}

Mat pca_transform(const PcaModel& model, const Mat& x) {
  if (x.cols() != model.mean.size()) throw Error(ErrorCode::DimensionMismatch, "PCA input dimension mismatch");
  return (x.rowwise() - model.mean.transpose()) * model.components;
}

Mat pca_inverse(const PcaModel& model, const Mat& scores) {
  if (scores.cols() != model.k()) throw Error(ErrorCode::DimensionMismatch, "PCA score dimension mismatch");
  return (scores * model.components.transpose()).rowwise() + model.mean.transpose();
}

// ---- CCA -----------------------------------------------------------------

namespace {

Mat covariance(const Mat& a, const Mat& b) { return a.transpose() * b / static_cast<double>(a.rows()); }

// (S + ridge I)^(-1/2) with ridge relative to the mean diagonal.
Mat inverse_sqrt(const Mat& s, double ridge, const char* side) {
  const Eigen::Index d = s.rows();
  const double lambda = ridge * s.diagonal().mean();
  Eigen::SelfAdjointEigenSolver<Mat> eig(s + lambda * Mat::Identity(d, d));
  const Vec& ev = eig.eigenvalues();
  const double floor = 1e-12 * std::max(ev.maxCoeff(), 1e-300);
  if (ev.minCoeff() <= floor)
    throw Error(ErrorCode::SingularCovariance, std::string(side) + " covariance is singular; use ridge > 0");
  return eig.eigenvectors() * ev.cwiseInverse().cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
}

Vec column_std(const Mat& z) {
  Vec s(z.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    const double mu = z.col(c).mean();
    s[c] = std::sqrt((z.col(c).array() - mu).square().mean());
    if (!(s[c] > 0.0)) s[c] = 1.0;
  }
  return s;
}

double pearson(const Eigen::Ref<const Vec>& a, const Eigen::Ref<const Vec>& b) {
  const Vec ac = a.array() - a.mean();
  const Vec bc = b.array() - b.mean();
  const double den = ac.norm() * bc.norm();
  return den > 0.0 ? ac.dot(bc) / den : 0.0;
}

Mat scaled_scores(const CcaModel& m, Side side, const Mat& rows) {
  const PcaModel& pca = side == Side::Neural ? m.x_pca : m.y_pca;
  const Vec& scale = side == Side::Neural ? m.x_scale : m.y_scale;
  return pca_transform(pca, rows) * scale.cwiseInverse().asDiagonal();
}

}  // namespace

CcaModel cca_fit(const Mat& x, const Mat& y, const CcaOptions& options) {
  if (x.rows() != y.rows()) throw Error(ErrorCode::LengthMismatch, "CCA inputs must have paired rows");
  if (options.ridge < 0.0) throw Error(ErrorCode::InvalidArgument, "ridge must be >= 0");
  CcaModel m;
  m.ridge = options.ridge;
  m.x_pca = pca_fit(x, std::min<int>(options.k_x, static_cast<int>(x.cols())));
  m.y_pca = pca_fit(y, std::min<int>(options.k_y, static_cast<int>(y.cols())));
  const Mat zx0 = pca_transform(m.x_pca, x);
  const Mat zy0 = pca_transform(m.y_pca, y);
  m.x_scale = column_std(zx0);
  m.y_scale = column_std(zy0);
  const Mat zx = zx0 * m.x_scale.cwiseInverse().asDiagonal();
  const Mat zy = zy0 * m.y_scale.cwiseInverse().asDiagonal();
  const int k = std::min({options.k_cca, m.x_pca.k(), m.y_pca.k()});
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k_cca must be >= 1");

  const Mat sxx = covariance(zx, zx);
  const Mat syy = covariance(zy, zy);
  const Mat sxy = covariance(zx, zy);
  const Mat wx = inverse_sqrt(sxx, options.ridge, "neural");
  const Mat wy = inverse_sqrt(syy, options.ridge, "behavior");
  Eigen::JacobiSVD<Mat> svd(wx * sxy * wy, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Mat u = wx * svd.matrixU().leftCols(k);
  Mat v = wy * svd.matrixV().leftCols(k);

  // Unit-variance training variates with corr(z_x, z_y) >= 0.
  Mat vx = zx * u, vy = zy * v;
  std::vector<double> r(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    const double sx = std::sqrt(vx.col(c).squaredNorm() / static_cast<double>(vx.rows()));
    const double sy = std::sqrt(vy.col(c).squaredNorm() / static_cast<double>(vy.rows()));
    if (!(sx > 0.0) || !(sy > 0.0)) throw Error(ErrorCode::DegenerateVariance, "canonical variate has zero variance");
    u.col(c) /= sx;
    v.col(c) /= sy;
    double rc = pearson(vx.col(c), vy.col(c));
    if (rc < 0.0) {
      v.col(c) *= -1.0;
      rc = -rc;
    }
    r[static_cast<std::size_t>(c)] = std::clamp(rc, 0.0, 1.0);
  }
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return r[a] > r[b]; });
  m.u.resize(u.rows(), k);
  m.v.resize(v.rows(), k);
  m.rho.resize(k);
  for (int c = 0; c < k; ++c) {
    m.u.col(c) = u.col(order[c]);
    m.v.col(c) = v.col(order[c]);
    m.rho[c] = r[order[c]];
  }
  m.u_pinv = m.u.completeOrthogonalDecomposition().pseudoInverse();
  m.v_pinv = m.v.completeOrthogonalDecomposition().pseudoInverse();
  return m;
}

Mat cca_project(const CcaModel& m, Side side, const Mat& rows) {
  return scaled_scores(m, side, rows) * (side == Side::Neural ? m.u : m.v);
}

Vec cca_project(const CcaModel& m, Side side, const Vec& row) {
  return cca_project(m, side, Mat(row.transpose())).row(0).transpose();
}

Mat cca_inverse(const CcaModel& m, Side side, const Mat& z) {
  if (z.cols() != m.k_cca()) throw Error(ErrorCode::DimensionMismatch, "canonical coordinate dimension mismatch");
  const PcaModel& pca = side == Side::Neural ? m.x_pca : m.y_pca;
  const Vec& scale = side == Side::Neural ? m.x_scale : m.y_scale;
  const Mat& pinv = side == Side::Neural ? m.u_pinv : m.v_pinv;
  return pca_inverse(pca, z * pinv * scale.asDiagonal());
}

Vec cca_inverse(const CcaModel& m, Side side, const Vec& z) {
  return cca_inverse(m, side, Mat(z.transpose())).row(0).transpose();
}

Vec variate_correlations(const CcaModel& m, const Mat& x, const Mat& y) {
  const Mat zx = cca_project(m, Side::Neural, x);
  const Mat zy = cca_project(m, Side::Behavior, y);
  Vec r(zx.cols());
  for (Eigen::Index c = 0; c < zx.cols(); ++c) r[c] = pearson(zx.col(c), zy.col(c));
  return r;
}

Vec PermutationNull::quantile(double q) const {
  if (rho.empty()) return {};
  const auto k = rho.front().size();
  Vec out(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    std::vector<double> col;
    for (const Vec& r : rho) col.push_back(r[c]);
    std::sort(col.begin(), col.end());
    const double pos = q * static_cast<double>(col.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, col.size() - 1);
    out[c] = col[lo] + (pos - static_cast<double>(lo)) * (col[hi] - col[lo]);
  }
  return out;
}

PermutationNull cca_permutation_null(const Mat& x, const Mat& y, const CcaOptions& options, int shuffles,
                                     std::uint64_t seed) {
  PermutationNull null;
  Rng rng(seed);
  std::vector<int> perm(static_cast<std::size_t>(y.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  Mat ys(y.rows(), y.cols());
  for (int s = 0; s < shuffles; ++s) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Eigen::Index i = 0; i < y.rows(); ++i) ys.row(i) = y.row(perm[static_cast<std::size_t>(i)]);
    null.rho.push_back(cca_fit(x, ys, options).rho);
  }
  return null;
}

// ---- RSA -----------------------------------------------------------------

DistanceMatrix pairwise_distances(const Mat& rows) {
  DistanceMatrix m;
  m.n = static_cast<int>(rows.rows());
  m.d = Mat::Zero(m.n, m.n);
  for (int i = 0; i < m.n; ++i)
    for (int j = i + 1; j < m.n; ++j) {
      const double d = (rows.row(i) - rows.row(j)).norm();
      m.d(i, j) = d;
      m.d(j, i) = d;
    }
  return m;
}

double rsa_pearson(const DistanceMatrix& a, const DistanceMatrix& b) {
  if (a.n != b.n) throw Error(ErrorCode::DimensionMismatch, "distance matrices differ in size");
  if (a.n < 3) throw Error(ErrorCode::InvalidArgument, "RSA needs n >= 3");
  const auto count = static_cast<double>(a.n) * (a.n - 1) / 2.0;
  double ma = 0.0, mb = 0.0;
  for (int i = 0; i < a.n; ++i)
    for (int j = i + 1; j < a.n; ++j) {
      ma += a.d(i, j);
      mb += b.d(i, j);
    }
  ma /= count;
  mb /= count;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (int i = 0; i < a.n; ++i)
    for (int j = i + 1; j < a.n; ++j) {
      const double da = a.d(i, j) - ma, db = b.d(i, j) - mb;
      sab += da * db;
      saa += da * da;
      sbb += db * db;
    }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw Error(ErrorCode::DegenerateVariance, "distance matrix is constant");
  return sab / std::sqrt(saa * sbb);
}

DistanceMatrix permuted(const DistanceMatrix& m, std::span<const int> perm) {
  if (static_cast<int>(perm.size()) != m.n) throw Error(ErrorCode::DimensionMismatch, "permutation size mismatch");
  DistanceMatrix out{m.n, Mat(m.n, m.n)};
  for (int i = 0; i < m.n; ++i)
    for (int j = 0; j < m.n; ++j) out.d(i, j) = m.d(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  return out;
}

// ---- control -------------------------------------------------------------

std::vector<Vec> pseudo_manifold(std::span<const Action> target_actions, const Mat& w_out, const Vec& b_out, int dim,
                                 double margin, std::uint64_t seed) {
  const auto n_actions = w_out.rows();
  if (n_actions < 2) throw Error(ErrorCode::InvalidArgument, "pseudo_manifold needs at least two actions");
  if (w_out.cols() != dim || b_out.size() != n_actions)
    throw Error(ErrorCode::DimensionMismatch, "readout shape does not match dim");
  if (dim < n_actions) throw Error(ErrorCode::InvalidArgument, "dim must be >= number of actions");

  // Per action: orthonormal basis of the other rows and the unit residual
  // of the target row against it.
  struct Basis {
    Mat others;  // dim x r, orthonormal
    Vec dir;
    double reach = 0.0;  // w_target . dir
  };
  std::vector<Basis> bases(static_cast<std::size_t>(n_actions));
  for (Eigen::Index a = 0; a < n_actions; ++a) {
    Basis& b = bases[static_cast<std::size_t>(a)];
    std::vector<Vec> q;
    for (Eigen::Index j = 0; j < n_actions; ++j) {
      if (j == a) continue;
      Vec w = w_out.row(j).transpose();
      for (const Vec& e : q) w -= e.dot(w) * e;
      const double nw = w.norm();
      if (nw > 1e-12 * std::max(1.0, w_out.row(j).norm())) q.push_back(w / nw);
    }
    b.others.resize(dim, static_cast<Eigen::Index>(q.size()));
    for (std::size_t i = 0; i < q.size(); ++i) b.others.col(static_cast<Eigen::Index>(i)) = q[i];
    Vec r = w_out.row(a).transpose();
    if (b.others.cols() > 0) r -= b.others * (b.others.transpose() * r);
    b.reach = r.norm();
    if (b.reach > 1e-12 * std::max(1.0, w_out.row(a).norm())) b.dir = r / b.reach;
  }

  Rng rng(seed);
  std::vector<Vec> states;
  states.reserve(target_actions.size());
  for (Action act : target_actions) {
    const auto a = static_cast<Eigen::Index>(act);
    if (a >= n_actions) throw Error(ErrorCode::InvalidArgument, "target action outside readout");
    const Basis& b = bases[static_cast<std::size_t>(a)];
    if (b.dir.size() == 0)
      throw Error(ErrorCode::InfeasibleConstraint, "target readout row lies in the span of the other rows");
    Vec v = gaussian_vector(rng, dim);
    if (b.others.cols() > 0) v -= b.others * (b.others.transpose() * v);
    const Vec logits = w_out * v + b_out;
    double rival = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n_actions; ++j)
      if (j != a) rival = std::max(rival, logits[j]);
    const double shortfall = rival + margin - logits[a];
    if (shortfall > 0.0) v += (shortfall / b.reach) * b.dir;
    const Vec check = w_out * v + b_out;
    Eigen::Index best;
    check.maxCoeff(&best);
    if (best != a) throw Error(ErrorCode::InfeasibleConstraint, "constructed state does not select the target action");
    states.push_back(std::move(v));
  }
  return states;
}

ControlResult control_experiment(const Mat& trained_centroids, const Mat& control_centroids, const Mat& behavior,
                                 const CcaOptions& options) {
  if (trained_centroids.rows() != behavior.rows() || control_centroids.rows() != behavior.rows())
    throw Error(ErrorCode::LengthMismatch, "control experiment needs matched sample counts");
  ControlResult out;
  const CcaModel trained = cca_fit(trained_centroids, behavior, options);
  const CcaModel control = cca_fit(control_centroids, behavior, options);
  out.trained_rho = trained.rho;
  out.control_rho = control.rho;
  out.trained_variates_x = cca_project(trained, Side::Neural, trained_centroids);
  out.trained_variates_y = cca_project(trained, Side::Behavior, behavior);
  out.control_variates_x = cca_project(control, Side::Neural, control_centroids);
  out.control_variates_y = cca_project(control, Side::Behavior, behavior);
  return out;
}

// ---- serialization --------------------------------------------------------

void to_json(nlohmann::json& j, const PcaModel& m) {
  j = nlohmann::json{{"mean", vector_blob(m.mean)},
                     {"components", matrix_blob(m.components)},
                     {"explained_variance", vector_blob(m.explained_variance)},
                     {"total_variance", m.total_variance},
                     {"truncated", m.truncated}};
}

void from_json(const nlohmann::json& j, PcaModel& m) {
  m.mean = vector_from_blob(j.at("mean"));
  m.components = matrix_from_blob(j.at("components"));
  m.explained_variance = vector_from_blob(j.at("explained_variance"));
  m.total_variance = j.at("total_variance").get<double>();
  m.truncated = j.value("truncated", false);
  if (m.components.rows() != m.mean.size() || m.components.cols() != m.explained_variance.size())
    throw Error(ErrorCode::SchemaMismatch, "inconsistent PCA model shapes");
}

void to_json(nlohmann::json& j, const CcaModel& m) {
  j = nlohmann::json{{"schema", "dynlab.cca.v1"},
                     {"x_pca", m.x_pca},
                     {"y_pca", m.y_pca},
                     {"x_scale", vector_blob(m.x_scale)},
                     {"y_scale", vector_blob(m.y_scale)},
                     {"u", matrix_blob(m.u)},
                     {"v", matrix_blob(m.v)},
                     {"rho", std::vector<double>(m.rho.data(), m.rho.data() + m.rho.size())},
                     {"u_pinv", matrix_blob(m.u_pinv)},
                     {"v_pinv", matrix_blob(m.v_pinv)},
                     {"ridge", m.ridge}};
}

void from_json(const nlohmann::json& j, CcaModel& m) {
  if (j.value("schema", std::string()) != "dynlab.cca.v1")
    throw Error(ErrorCode::SchemaMismatch, "not a dynlab.cca.v1 document");
  m.x_pca = j.at("x_pca").get<PcaModel>();
  m.y_pca = j.at("y_pca").get<PcaModel>();
  m.x_scale = vector_from_blob(j.at("x_scale"));
  m.y_scale = vector_from_blob(j.at("y_scale"));
  m.u = matrix_from_blob(j.at("u"));
  m.v = matrix_from_blob(j.at("v"));
  const auto rho = j.at("rho").get<std::vector<double>>();
  m.rho = Eigen::Map<const Vec>(rho.data(), static_cast<Eigen::Index>(rho.size()));
  m.u_pinv = matrix_from_blob(j.at("u_pinv"));
  m.v_pinv = matrix_from_blob(j.at("v_pinv"));
  m.ridge = j.at("ridge").get<double>();
  if (m.u.cols() != m.rho.size() || m.v.cols() != m.rho.size())
    throw Error(ErrorCode::SchemaMismatch, "inconsistent CCA model shapes");
}

}  // namespace dynlab
