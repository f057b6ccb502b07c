#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "meshspm/core.hpp"

namespace meshspm {

/// Triangle surface mesh with per-vertex barycentric areas and edge
/// adjacency, immutable after build(). All statistics code treats the mesh
/// as a vertex graph: two vertices are neighbours iff they share a triangle
/// edge, and each vertex owns one third of the area of every incident
/// triangle, so the vertex areas partition the total surface exactly.
struct TriangleMesh {
  std::vector<std::array<double, 3>> vertices;
  std::vector<std::array<int, 3>> triangles;

  // Derived by build().
  std::vector<double> vertex_area;
  std::vector<std::vector<int>> neighbors;
  double total_area = 0.0;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int triangle_count() const { return static_cast<int>(triangles.size()); }

  static TriangleMesh build(std::vector<std::array<double, 3>> vertices,
                            std::vector<std::array<int, 3>> triangles);
};

inline double triangle_area(const std::array<double, 3>& a,
                            const std::array<double, 3>& b,
                            const std::array<double, 3>& c) {
  const double ux = b[0] - a[0], uy = b[1] - a[1], uz = b[2] - a[2];
  const double vx = c[0] - a[0], vy = c[1] - a[1], vz = c[2] - a[2];
  const double cx = uy * vz - uz * vy;
  const double cy = uz * vx - ux * vz;
  const double cz = ux * vy - uy * vx;
  return 0.5 * std::sqrt(cx * cx + cy * cy + cz * cz);
}

// One third of every incident triangle's area goes to each of its corners.
// Degenerate (collinear) triangles contribute zero rather than failing:
// real extracted surfaces contain them. Isolated vertices get zero area.
inline std::vector<double> compute_vertex_areas(const TriangleMesh& mesh) {
  if (mesh.triangles.empty()) throw ValidationError("no triangles");
  const int nv = mesh.vertex_count();
  for (const auto& v : mesh.vertices)
    for (double c : v)
      if (!std::isfinite(c)) throw ValidationError("invalid geometry");
  std::vector<double> area(static_cast<size_t>(nv), 0.0);
  for (const auto& t : mesh.triangles) {
    for (int k : t)
      if (k < 0 || k >= nv) throw ValidationError("triangle index out of range");
    const double third =
        triangle_area(mesh.vertices[static_cast<size_t>(t[0])],
                      mesh.vertices[static_cast<size_t>(t[1])],
                      mesh.vertices[static_cast<size_t>(t[2])]) /
        3.0;
    for (int k : t) area[static_cast<size_t>(k)] += third;
  }
  return area;
}

// Neighbour lists from shared triangle edges, deduplicated, sorted ascending,
// no self loops. Sorted order keeps every downstream traversal deterministic.
inline std::vector<std::vector<int>> build_adjacency(const TriangleMesh& mesh) {
  const int nv = mesh.vertex_count();
  std::vector<std::vector<int>> adj(static_cast<size_t>(nv));
  for (const auto& t : mesh.triangles) {
    for (int k : t)
      if (k < 0 || k >= nv) throw ValidationError("triangle index out of range");
    const int e[3][2] = {{t[0], t[1]}, {t[1], t[2]}, {t[2], t[0]}};
    for (const auto& edge : e) {
      if (edge[0] == edge[1]) continue;
      adj[static_cast<size_t>(edge[0])].push_back(edge[1]);
      adj[static_cast<size_t>(edge[1])].push_back(edge[0]);
    }
  }
  for (auto& list : adj) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return adj;
}

inline TriangleMesh TriangleMesh::build(
    std::vector<std::array<double, 3>> vertices,
    std::vector<std::array<int, 3>> triangles) {
  TriangleMesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.triangles = std::move(triangles);
  mesh.vertex_area = compute_vertex_areas(mesh);
  mesh.neighbors = build_adjacency(mesh);
  mesh.total_area = 0.0;
  for (double a : mesh.vertex_area) mesh.total_area += a;
  return mesh;
}

/// Connected set of vertices passing a statistic threshold. `extent` is the
/// sum of member vertex areas, accumulated in ascending vertex order: a fixed
/// summation order makes cluster extents, and everything derived from them,
/// reproducible to the bit.
struct VertexCluster {
  std::vector<int> vertex_ids;  // sorted ascending
  double extent = 0.0;
};

enum class Direction { positive, negative };

// Connected components of the subgraph induced by {v : stat[v] >= h}
// (positive) or {v : stat[v] <= h} (negative). Components are ordered by
// smallest member index; members are sorted ascending.
inline std::vector<VertexCluster> thresholded_components(
    const TriangleMesh& mesh, std::span<const double> stat, double h,
    Direction direction) {
  const int nv = mesh.vertex_count();
  if (static_cast<int>(stat.size()) != nv)
    throw ValidationError("statistic length does not match vertex count");
  if (!std::isfinite(h)) throw ValidationError("threshold must be finite");

  auto passes = [&](int v) {
    const double s = stat[static_cast<size_t>(v)];
    return direction == Direction::positive ? s >= h : s <= h;
  };

  std::vector<VertexCluster> clusters;
  std::vector<char> visited(static_cast<size_t>(nv), 0);
  std::vector<int> queue;
  for (int seed = 0; seed < nv; ++seed) {
    if (visited[static_cast<size_t>(seed)] || !passes(seed)) continue;
    VertexCluster cluster;
    queue.clear();
    queue.push_back(seed);
    visited[static_cast<size_t>(seed)] = 1;
    while (!queue.empty()) {
      const int v = queue.back();
      queue.pop_back();
      cluster.vertex_ids.push_back(v);
      for (int w : mesh.neighbors[static_cast<size_t>(v)]) {
        if (!visited[static_cast<size_t>(w)] && passes(w)) {
          visited[static_cast<size_t>(w)] = 1;
          queue.push_back(w);
        }
      }
    }
    std::sort(cluster.vertex_ids.begin(), cluster.vertex_ids.end());
    for (int v : cluster.vertex_ids)
      cluster.extent += mesh.vertex_area[static_cast<size_t>(v)];
    clusters.push_back(std::move(cluster));
  }
  return clusters;
}

}  // namespace meshspm
