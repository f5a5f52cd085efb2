#pragma once

#include <string>
#include <vector>

#include "dynlab/maze.hpp"
#include "dynlab/policy.hpp"
#include "dynlab/rng.hpp"

namespace testing {

// Maze from ASCII rows: '#' wall, '.' free, 'S' start, 'G' goal.
inline dynlab::MazeTask ascii_maze(const std::vector<std::string>& rows) {
  dynlab::MazeTask t;
  t.height = static_cast<int>(rows.size());
  t.width = static_cast<int>(rows.front().size());
  for (int r = 0; r < t.height; ++r)
    for (int c = 0; c < t.width; ++c) {
      const char ch = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      t.grid.push_back(ch == '#' ? 1 : 0);
      if (ch == 'S') t.start = {r, c};
      if (ch == 'G') t.goal = {r, c};
    }
  return t;
}

// Readout that always prefers `a` regardless of h.
inline dynlab::PolicyParams constant_policy(dynlab::Action a, int hidden = 8) {
  dynlab::PolicyDims dims;
  dims.hidden = hidden;
  dynlab::PolicyParams p(dynlab::Arch::Gru, dims);
  p.b_out[static_cast<int>(a)] = 1.0;
  return p;
}

inline dynlab::Vec random_vec(int n, std::uint64_t seed, double scale = 1.0) {
  dynlab::Rng rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  dynlab::Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = nd(rng);
  return v;
}

inline dynlab::Mat random_mat(int r, int c, std::uint64_t seed, double scale = 1.0) {
  dynlab::Rng rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  dynlab::Mat m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = nd(rng);
  return m;
}


// Closed-form Jacobian of the GRU step with respect to h.
inline dynlab::Mat analytic_gru_jacobian(const dynlab::PolicyParams& p, const dynlab::Vec& h, const dynlab::Vec& o) {
  const int n = p.dims.hidden;
  auto sig = [](const dynlab::Vec& a) { return dynlab::Vec((1.0 / (1.0 + (-a.array()).exp())).matrix()); };
  const dynlab::Mat uz = p.w_rec.topRows(n), ur = p.w_rec.middleRows(n, n), un = p.w_rec.bottomRows(n);
  const dynlab::Vec z = sig(p.w_in.topRows(n) * o + uz * h + p.bias.head(n));
  const dynlab::Vec r = sig(p.w_in.middleRows(n, n) * o + ur * h + p.bias.segment(n, n));
  const dynlab::Vec cand = (p.w_in.bottomRows(n) * o + un * r.cwiseProduct(h) + p.bias.tail(n)).array().tanh().matrix();
  const dynlab::Mat dz = z.cwiseProduct(dynlab::Vec::Ones(n) - z).asDiagonal() * uz;
  const dynlab::Mat dr = r.cwiseProduct(dynlab::Vec::Ones(n) - r).asDiagonal() * ur;
  const dynlab::Mat drh = dynlab::Mat(r.asDiagonal()) + h.asDiagonal() * dr;
  const dynlab::Mat dn = (dynlab::Vec::Ones(n) - cand.cwiseProduct(cand)).asDiagonal() * un * drh;
  return dynlab::Mat((dynlab::Vec::Ones(n) - z).asDiagonal()) + (cand - h).asDiagonal() * dz + z.asDiagonal() * dn;
}

}  // namespace testing
