#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "meshspm/core.hpp"
#include "meshspm/mesh.hpp"

namespace meshspm {

struct TfceParams {
  double extent_exponent = 0.5;  // E
  double height_exponent = 2.0;  // H
  int num_steps = 100;           // threshold samples per sign
  int min_cluster_vertices = 3;  // clusters of <= 2 vertices never score

  void validate() const {
    if (extent_exponent < 0.0 || height_exponent < 0.0)
      throw ValidationError("TFCE exponents must be non-negative");
    if (num_steps < 1) throw ValidationError("TFCE needs at least one step");
    if (min_cluster_vertices < 1)
      throw ValidationError("min cluster size must be >= 1");
  }
};

struct TfceMap {
  std::vector<double> scores;
  TfceParams params;
};

// Uniform threshold samples h_k = max * (k / steps), k = 1..steps. h = 0 is
// excluded: it selects the whole mesh and contributes nothing. The top
// sample equals the map maximum exactly.
inline std::vector<double> tfce_threshold_grid(double max_stat, int num_steps) {
  std::vector<double> grid(static_cast<size_t>(num_steps));
  for (int k = 1; k <= num_steps; ++k)
    grid[static_cast<size_t>(k - 1)] =
        max_stat * (static_cast<double>(k) / static_cast<double>(num_steps));
  return grid;
}

/// Reusable flood-fill scratch; one per worker thread.
struct TfceWorkspace {
  std::vector<std::uint32_t> visit_epoch;
  std::vector<int> stack;
  std::vector<int> members;
  std::uint32_t epoch = 0;
};

namespace detail {

// One signed side of the transform. `height(v)` is the positive working
// statistic (t or -t); contributions are accumulated into scores with
// `sign`. Cluster extents are always summed in ascending vertex order so
// that repeated runs, and the per-vertex reference evaluation, agree bit for
// bit.
template <typename HeightFn>
void tfce_one_side(const TriangleMesh& mesh, HeightFn height, double sign,
                   const TfceParams& params, std::vector<double>& scores,
                   TfceWorkspace& ws) {
  const int nv = mesh.vertex_count();
  double max_h = 0.0;
  for (int v = 0; v < nv; ++v) max_h = std::max(max_h, height(v));
  if (max_h <= 0.0) return;

  const double dh = max_h / static_cast<double>(params.num_steps);
  const auto grid = tfce_threshold_grid(max_h, params.num_steps);

  if (ws.visit_epoch.size() != static_cast<size_t>(nv)) {
    ws.visit_epoch.assign(static_cast<size_t>(nv), 0);
    ws.epoch = 0;
  }

  for (double h : grid) {
    ++ws.epoch;
    for (int seed = 0; seed < nv; ++seed) {
      if (ws.visit_epoch[static_cast<size_t>(seed)] == ws.epoch) continue;
      if (height(seed) < h) continue;
      ws.members.clear();
      ws.stack.clear();
      ws.stack.push_back(seed);
      ws.visit_epoch[static_cast<size_t>(seed)] = ws.epoch;
      while (!ws.stack.empty()) {
        const int v = ws.stack.back();
        ws.stack.pop_back();
        ws.members.push_back(v);
        for (int w : mesh.neighbors[static_cast<size_t>(v)]) {
          if (ws.visit_epoch[static_cast<size_t>(w)] != ws.epoch &&
              height(w) >= h) {
            ws.visit_epoch[static_cast<size_t>(w)] = ws.epoch;
            ws.stack.push_back(w);
          }
        }
      }
      if (static_cast<int>(ws.members.size()) < params.min_cluster_vertices)
        continue;
      std::sort(ws.members.begin(), ws.members.end());
      double extent = 0.0;
      for (int v : ws.members) extent += mesh.vertex_area[static_cast<size_t>(v)];
      const double term = std::pow(extent, params.extent_exponent) *
                          std::pow(h, params.height_exponent) * dh;
      for (int v : ws.members) scores[static_cast<size_t>(v)] += sign * term;
    }
  }
}

}  // namespace detail

// Signed TFCE: the positive algorithm applied to t and, with negated
// output, to -t. A vertex has t of one sign, so exactly one side can
// contribute to it; vertices with t = 0 always score 0.
inline void tfce_transform_into(const TriangleMesh& mesh,
                                std::span<const double> tmap,
                                const TfceParams& params,
                                std::vector<double>& scores,
                                TfceWorkspace& ws) {
  params.validate();
  const int nv = mesh.vertex_count();
  if (static_cast<int>(tmap.size()) != nv)
    throw ValidationError("statistic length does not match vertex count");
  for (double t : tmap)
    if (!std::isfinite(t)) throw NumericalError("non-finite statistic");

  scores.assign(static_cast<size_t>(nv), 0.0);
  detail::tfce_one_side(
      mesh, [&](int v) { return std::max(tmap[static_cast<size_t>(v)], 0.0); },
      1.0, params, scores, ws);
  detail::tfce_one_side(
      mesh, [&](int v) { return std::max(-tmap[static_cast<size_t>(v)], 0.0); },
      -1.0, params, scores, ws);
}

inline TfceMap tfce_transform(const TriangleMesh& mesh,
                              std::span<const double> tmap,
                              const TfceParams& params) {
  TfceMap map;
  map.params = params;
  TfceWorkspace ws;
  tfce_transform_into(mesh, tmap, params, map.scores, ws);
  return map;
}

}  // namespace meshspm
