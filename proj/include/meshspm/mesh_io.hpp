#pragma once

#include <array>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "meshspm/csv.hpp"
#include "meshspm/mesh.hpp"

namespace meshspm {

// ASCII PLY reader. Handles the subset surface tools actually emit: an
// "element vertex" with x/y/z among its properties (extras are read and
// dropped) and an "element face" whose list property holds triangle indices.
// Binary PLY and non-triangle faces are rejected.
inline TriangleMesh read_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0)
    throw IoError(path + ": not a PLY file");

  struct Element {
    std::string name;
    long count = 0;
    std::vector<std::string> properties;  // scalar property names, in order
    bool has_list = false;
  };
  std::vector<Element> elements;

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    if (token == "comment" || token == "obj_info" || token.empty()) continue;
    if (token == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw IoError(path + ": only ASCII PLY is supported");
    } else if (token == "element") {
      Element e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (token == "property") {
      if (elements.empty()) throw IoError(path + ": property before element");
      std::string type;
      ls >> type;
      if (type == "list") {
        elements.back().has_list = true;
      } else {
        std::string name;
        ls >> name;
        elements.back().properties.push_back(name);
      }
    } else if (token == "end_header") {
      break;
    } else {
      throw IoError(path + ": unrecognised header line '" + line + "'");
    }
  }

  std::vector<std::array<double, 3>> vertices;
  std::vector<std::array<int, 3>> triangles;

  for (const auto& e : elements) {
    if (e.name == "vertex") {
      if (e.has_list)
        throw IoError(path + ": list properties on vertices are unsupported");
      int ix = -1, iy = -1, iz = -1;
      for (size_t j = 0; j < e.properties.size(); ++j) {
        if (e.properties[j] == "x") ix = static_cast<int>(j);
        if (e.properties[j] == "y") iy = static_cast<int>(j);
        if (e.properties[j] == "z") iz = static_cast<int>(j);
      }
      if (ix < 0 || iy < 0 || iz < 0)
        throw IoError(path + ": vertex element lacks x/y/z properties");
      vertices.reserve(static_cast<size_t>(e.count));
      for (long i = 0; i < e.count; ++i) {
        std::vector<double> values(e.properties.size());
        for (auto& v : values)
          if (!(in >> v)) throw IoError(path + ": truncated vertex data");
        vertices.push_back({values[static_cast<size_t>(ix)],
                            values[static_cast<size_t>(iy)],
                            values[static_cast<size_t>(iz)]});
      }
    } else if (e.name == "face") {
      triangles.reserve(static_cast<size_t>(e.count));
      for (long i = 0; i < e.count; ++i) {
        int n = 0;
        if (!(in >> n)) throw IoError(path + ": truncated face data");
        if (n != 3)
          throw IoError(path + ": face with " + std::to_string(n) +
                        " vertices; only triangles are supported");
        std::array<int, 3> tri{};
        for (int& idx : tri)
          if (!(in >> idx)) throw IoError(path + ": truncated face data");
        triangles.push_back(tri);
      }
    } else {
      // Unknown element: consume one whitespace-separated token per scalar
      // property per row. List-bearing unknown elements cannot be skipped
      // reliably.
      if (e.has_list)
        throw IoError(path + ": unsupported element '" + e.name + "'");
      std::string dummy;
      for (long i = 0; i < e.count; ++i)
        for (size_t j = 0; j < e.properties.size(); ++j) in >> dummy;
    }
  }

  return TriangleMesh::build(std::move(vertices), std::move(triangles));
}

// Plain two-file format: vertices.txt holds one "x y z" per line, faces.txt
// one zero-based "i j k" per line.
inline TriangleMesh read_vertex_face_files(const std::string& vertices_path,
                                           const std::string& faces_path) {
  std::ifstream vin(vertices_path);
  if (!vin) throw IoError("cannot open " + vertices_path);
  std::ifstream fin(faces_path);
  if (!fin) throw IoError("cannot open " + faces_path);

  std::vector<std::array<double, 3>> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::string line;
  size_t lineno = 0;
  while (std::getline(vin, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::array<double, 3> v{};
    if (!(ls >> v[0] >> v[1] >> v[2]))
      throw IoError(vertices_path + ":" + std::to_string(lineno) +
                    ": expected 'x y z'");
    vertices.push_back(v);
  }
  lineno = 0;
  while (std::getline(fin, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::array<int, 3> t{};
    if (!(ls >> t[0] >> t[1] >> t[2]))
      throw IoError(faces_path + ":" + std::to_string(lineno) +
                    ": expected 'i j k'");
    triangles.push_back(t);
  }
  return TriangleMesh::build(std::move(vertices), std::move(triangles));
}

// Emits an ASCII PLY with optional per-vertex scalar properties appended
// after x/y/z, for inspection in external surface viewers.
inline void write_ply(
    const std::string& path, const TriangleMesh& mesh,
    const std::vector<std::pair<std::string, const std::vector<double>*>>&
        scalars = {}) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& [name, values] : scalars)
    if (static_cast<int>(values->size()) != mesh.vertex_count())
      throw ValidationError("scalar '" + name + "' length mismatch");

  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.vertex_count() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  for (const auto& [name, values] : scalars) {
    (void)values;
    out << "property float " << name << "\n";
  }
  out << "element face " << mesh.triangle_count() << "\n";
  out << "property list uchar int vertex_indices\n";
  out << "end_header\n";
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const auto& p = mesh.vertices[static_cast<size_t>(v)];
    out << format_double(p[0]) << ' ' << format_double(p[1]) << ' '
        << format_double(p[2]);
    for (const auto& [name, values] : scalars) {
      (void)name;
      out << ' ' << format_double((*values)[static_cast<size_t>(v)]);
    }
    out << '\n';
  }
  for (const auto& t : mesh.triangles)
    out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  if (!out) throw IoError("write failure: " + path);
}

}  // namespace meshspm
