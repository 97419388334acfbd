#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "scenefit/diff/vec3.hpp"
#include "scenefit/errors.hpp"

namespace scenefit {

using Face = std::array<int, 3>;

struct TriMesh {
  std::vector<Vec3d> vertices;
  std::vector<Face> faces;

  void validate() const {
    const int n = static_cast<int>(vertices.size());
    for (const auto& f : faces)
      for (int i : f)
        if (i < 0 || i >= n) throw InvalidInput("mesh face references a missing vertex");
  }
};

/// Unit icosphere: `level` midpoint subdivisions of an icosahedron
/// (level 1 has 42 vertices, level 2 has 162). Faces are outward (CCW).
inline TriMesh icosphere(int level) {
  if (level < 0) throw InvalidInput("icosphere level must be non-negative");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriMesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : m.vertices) v = normalized(v);
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
      m.vertices.push_back(normalized((m.vertices[a] + m.vertices[b]) * 0.5));
      const int idx = static_cast<int>(m.vertices.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(m.faces.size() * 4);
    for (const auto& f : m.faces) {
      const int a = mid(f[0], f[1]), b = mid(f[1], f[2]), c = mid(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    m.faces = std::move(next);
  }
  return m;
}

/// Vertex neighbour lists from face edges, sorted ascending.
inline std::vector<std::vector<int>> vertex_neighbors(const TriMesh& m) {
  std::vector<std::set<int>> sets(m.vertices.size());
  for (const auto& f : m.faces)
    for (int i = 0; i < 3; ++i) {
      sets[f[i]].insert(f[(i + 1) % 3]);
      sets[f[(i + 1) % 3]].insert(f[i]);
    }
  std::vector<std::vector<int>> out(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) out[i].assign(sets[i].begin(), sets[i].end());
  return out;
}

/// Number of edges used by exactly one face (0 for a closed surface).
inline std::size_t boundary_edge_count(const TriMesh& m) {
  std::map<std::pair<int, int>, int> count;
  for (const auto& f : m.faces)
    for (int i = 0; i < 3; ++i) ++count[std::minmax(f[i], f[(i + 1) % 3])];
  std::size_t n = 0;
  for (const auto& [e, c] : count) n += c == 1;
  return n;
}

template <class T>
T signed_volume(const std::vector<Vec3<T>>& v, const std::vector<Face>& faces) {
  T vol(0.0);
  for (const auto& f : faces) vol += dot(v[f[0]], cross(v[f[1]], v[f[2]]));
  return vol / 6.0;
}

template <class T>
Vec3<T> vertex_centroid(const std::vector<Vec3<T>>& v) {
  Vec3<T> c;
  for (const auto& p : v) c += p;
  return c / T(static_cast<double>(v.size()));
}

}  // namespace scenefit
