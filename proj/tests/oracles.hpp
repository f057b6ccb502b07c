// Independent reference implementations used only by tests. Each oracle
// recomputes a quantity from its textbook definition, deliberately avoiding
// the code paths in include/meshspm, so agreement is evidence rather than
// tautology.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "meshspm/core.hpp"
#include "meshspm/mesh.hpp"
#include "meshspm/rng.hpp"
#include "meshspm/tfce.hpp"

namespace oracle {

using meshspm::Index;
using meshspm::Matrix;
using meshspm::Vector;

// Gauss-Jordan inverse; small matrices only.
inline Matrix invert(Matrix a) {
  const Index n = a.rows();
  Matrix inv = Matrix::Identity(n, n);
  for (Index col = 0; col < n; ++col) {
    Index pivot = col;
    for (Index r = col + 1; r < n; ++r)
      if (std::fabs(a(r, col)) > std::fabs(a(pivot, col))) pivot = r;
    a.row(col).swap(a.row(pivot));
    inv.row(col).swap(inv.row(pivot));
    const double d = a(col, col);
    a.row(col) /= d;
    inv.row(col) /= d;
    for (Index r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a(r, col);
      a.row(r) -= f * a.row(col);
      inv.row(r) -= f * inv.row(col);
    }
  }
  return inv;
}

// Normal-equations least squares: beta = (X'X)^-1 X' y, classical se from
// s^2 (X'X)^-1.
struct OlsOracle {
  Vector beta;
  Vector se;
  Vector residuals;
};

inline OlsOracle ols(const Matrix& x, const Vector& y) {
  const Matrix xtx_inv = invert(x.transpose() * x);
  OlsOracle out;
  out.beta = xtx_inv * (x.transpose() * y);
  out.residuals = y - x * out.beta;
  const double s2 = out.residuals.squaredNorm() /
                    static_cast<double>(x.rows() - x.cols());
  out.se = (s2 * xtx_inv.diagonal().array()).sqrt();
  return out;
}

// HC4m sandwich evaluated step by step with explicit matrices.
inline Vector hc4m(const Matrix& x, const Vector& residuals) {
  const Index n = x.rows(), p = x.cols();
  const Matrix xtx_inv = invert(x.transpose() * x);
  const Matrix hat = x * xtx_inv * x.transpose();
  Matrix omega = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const double h = hat(i, i);
    const double r = static_cast<double>(n) * h / static_cast<double>(p);
    const double delta = std::min(1.0, r) + std::min(1.5, r);
    omega(i, i) = residuals[i] * residuals[i] / std::pow(1.0 - h, delta);
  }
  const Matrix cov = xtx_inv * x.transpose() * omega * x * xtx_inv;
  return cov.diagonal().array().sqrt();
}

// Benjamini-Hochberg step-up from the definition: adjusted value of rank k
// is min over j >= k of p_(j) m / j; a hypothesis is rejected when its
// adjusted value is <= q (the rank rule "largest k with p_(k) <= q k / m"
// phrased through the adjusted values, so the floating-point boundary is the
// same one the rejection decision uses).
struct BhOracle {
  std::vector<double> adjusted;
  std::vector<char> rejected;
};

inline BhOracle bh(const std::vector<double>& p, double q) {
  const int m = static_cast<int>(p.size());
  std::vector<int> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return p[static_cast<size_t>(a)] != p[static_cast<size_t>(b)]
               ? p[static_cast<size_t>(a)] < p[static_cast<size_t>(b)]
               : a < b;
  });
  BhOracle out;
  out.adjusted.assign(p.size(), 0.0);
  out.rejected.assign(p.size(), 0);
  for (int k = 1; k <= m; ++k) {
    double best = 1.0;
    for (int j = k; j <= m; ++j)
      best = std::min(best,
                      p[static_cast<size_t>(order[static_cast<size_t>(j - 1)])] *
                          m / static_cast<double>(j));
    out.adjusted[static_cast<size_t>(order[static_cast<size_t>(k - 1)])] = best;
    if (best <= q)
      out.rejected[static_cast<size_t>(order[static_cast<size_t>(k - 1)])] = 1;
  }
  return out;
}

// Naive TFCE: for each vertex separately, walk the threshold grid and
// re-derive the containing cluster with a fresh breadth-first search at
// every threshold. Cluster extents are summed in ascending vertex order,
// matching the documented summation contract.
inline std::vector<double> tfce_naive(const meshspm::TriangleMesh& mesh,
                                      const std::vector<double>& tmap,
                                      const meshspm::TfceParams& params) {
  const int nv = mesh.vertex_count();
  std::vector<double> scores(static_cast<size_t>(nv), 0.0);

  auto one_side = [&](auto height, double sign) {
    double max_h = 0.0;
    for (int v = 0; v < nv; ++v) max_h = std::max(max_h, height(v));
    if (max_h <= 0.0) return;
    const double dh = max_h / params.num_steps;
    const auto grid = meshspm::tfce_threshold_grid(max_h, params.num_steps);

    for (int v = 0; v < nv; ++v) {
      if (height(v) <= 0.0) continue;
      for (double h : grid) {
        if (height(v) < h) continue;
        // Containing cluster of v at threshold h, recomputed from scratch.
        std::vector<char> seen(static_cast<size_t>(nv), 0);
        std::vector<int> stack{v}, members;
        seen[static_cast<size_t>(v)] = 1;
        while (!stack.empty()) {
          const int u = stack.back();
          stack.pop_back();
          members.push_back(u);
          for (int w : mesh.neighbors[static_cast<size_t>(u)])
            if (!seen[static_cast<size_t>(w)] && height(w) >= h) {
              seen[static_cast<size_t>(w)] = 1;
              stack.push_back(w);
            }
        }
        if (static_cast<int>(members.size()) < params.min_cluster_vertices)
          continue;
        std::sort(members.begin(), members.end());
        double extent = 0.0;
        for (int u : members) extent += mesh.vertex_area[static_cast<size_t>(u)];
        scores[static_cast<size_t>(v)] +=
            sign * (std::pow(extent, params.extent_exponent) *
                    std::pow(h, params.height_exponent) * dh);
      }
    }
  };

  one_side([&](int v) { return std::max(tmap[static_cast<size_t>(v)], 0.0); },
           1.0);
  one_side([&](int v) { return std::max(-tmap[static_cast<size_t>(v)], 0.0); },
           -1.0);
  return scores;
}

// Kolmogorov-Smirnov distance of a sample against U(0, 1).
inline double ks_uniform(std::vector<double> sample) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (size_t i = 0; i < sample.size(); ++i) {
    const double f = sample[i];
    d = std::max(d, std::fabs((static_cast<double>(i) + 1.0) / n - f));
    d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
  }
  return d;
}

// Random connected mesh for equivalence sweeps: jittered grid with a random
// fraction of interior quads left as holes, so components and areas are
// irregular.
inline meshspm::TriangleMesh random_mesh(std::uint64_t seed, int max_side = 22) {
  meshspm::SplitMix64 g(seed);
  const int rows = 3 + static_cast<int>(g.next_below(max_side - 2));
  const int cols = 3 + static_cast<int>(g.next_below(max_side - 2));
  std::vector<std::array<double, 3>> vertices;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      vertices.push_back({i + 0.4 * (g.next_double() - 0.5),
                          j + 0.4 * (g.next_double() - 0.5),
                          0.3 * (g.next_double() - 0.5)});
  auto at = [cols](int i, int j) { return i * cols + j; };
  std::vector<std::array<int, 3>> triangles;
  for (int i = 0; i + 1 < rows; ++i)
    for (int j = 0; j + 1 < cols; ++j) {
      if (g.next_double() < 0.12) continue;  // hole
      triangles.push_back({at(i, j), at(i, j + 1), at(i + 1, j)});
      triangles.push_back({at(i, j + 1), at(i + 1, j + 1), at(i + 1, j)});
    }
  if (triangles.empty())
    triangles.push_back({at(0, 0), at(0, 1), at(1, 0)});
  return meshspm::TriangleMesh::build(std::move(vertices), std::move(triangles));
}

inline std::vector<double> random_tmap(const meshspm::TriangleMesh& mesh,
                                       std::uint64_t seed) {
  meshspm::SplitMix64 g(seed);
  std::vector<double> t(static_cast<size_t>(mesh.vertex_count()));
  for (auto& v : t) v = 3.0 * g.next_gaussian();
  // Sprinkle exact zeros; the zero-statistic path must stay exercised.
  for (auto& v : t)
    if (g.next_double() < 0.05) v = 0.0;
  return t;
}

}  // namespace oracle
