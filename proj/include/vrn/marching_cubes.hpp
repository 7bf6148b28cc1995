#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vrn/common.hpp"
#include "vrn/trimesh.hpp"
#include "vrn/voxelgrid.hpp"

namespace vrn {

namespace detail {

// Cube corners are indexed by coordinate bits (x = bit 0, y = bit 1,
// z = bit 2); the 12 edges connect corners differing in one bit.
//
// The 256-case triangle table is generated, not transcribed: for every
// corner classification, the directed iso-contour segments are traced on
// each cube face (pairing each exit crossing with the next entry crossing
// walking the face boundary counter-clockwise as seen from outside the
// cube), chained into closed loops, and fan-triangulated.  Because the
// segment pairing depends only on the face's own corner states, the two
// cubes sharing a face always agree on it — including the ambiguous
// diagonal cases — which is what makes every extraction watertight.
struct McTable {
  std::array<std::pair<int, int>, 12> edge_corners;
  int edge_id[8][8];
  std::vector<std::vector<int>> loops[256];
  std::vector<std::array<int, 3>> tris[256];
};

inline McTable build_mc_table() {
  McTable tab;
  for (auto& row : tab.edge_id)
    for (auto& v : row) v = -1;
  int ne = 0;
  for (int i = 0; i < 8; ++i)
    for (int b = 0; b < 3; ++b) {
      if (i & (1 << b)) continue;
      const int j = i | (1 << b);
      tab.edge_corners[ne] = {i, j};
      tab.edge_id[i][j] = tab.edge_id[j][i] = ne;
      ++ne;
    }

  // Six faces, four corners each, counter-clockwise from outside the cube.
  int faces[6][4];
  int nf = 0;
  for (int a = 0; a < 3; ++a)
    for (int s = 0; s < 2; ++s) {
      const int u = (a + 1) % 3, v = (a + 2) % 3;
      static const int uv[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
      for (int k = 0; k < 4; ++k) {
        const int* q = uv[s == 1 ? k : 3 - k];
        faces[nf][k] = (s << a) | (q[0] << u) | (q[1] << v);
      }
      ++nf;
    }

  for (int mask = 1; mask < 255; ++mask) {
    const auto inside = [&](int c) { return (mask >> c) & 1; };
    int nxt[12];
    int indeg[12] = {0};
    for (auto& v : nxt) v = -1;
    for (const auto& face : faces) {
      // Crossings in boundary-walk order, tagged exit (inside->outside)
      // or entry; exits pair with the next crossing, always an entry.
      std::vector<std::pair<int, bool>> cross;
      for (int k = 0; k < 4; ++k) {
        const int ca = face[k], cb = face[(k + 1) % 4];
        if (inside(ca) == inside(cb)) continue;
        cross.push_back({tab.edge_id[ca][cb], inside(ca)});
      }
      for (size_t k = 0; k < cross.size(); ++k) {
        if (!cross[k].second) continue;  // only start segments at exits
        const auto& to = cross[(k + 1) % cross.size()];
        if (to.second || nxt[cross[k].first] != -1)
          throw std::logic_error("mc table: inconsistent face contour");
        nxt[cross[k].first] = to.first;
        indeg[to.first]++;
      }
    }
    for (int e = 0; e < 12; ++e)
      if ((nxt[e] != -1) != (indeg[e] == 1))
        throw std::logic_error("mc table: open contour");

    bool used[12] = {};
    for (int e = 0; e < 12; ++e) {
      if (nxt[e] == -1 || used[e]) continue;
      std::vector<int> loop;
      for (int cur = e; !used[cur]; cur = nxt[cur]) {
        used[cur] = true;
        loop.push_back(cur);
      }
      if (loop.size() < 3) throw std::logic_error("mc table: short loop");
      // The walk rule traces loops clockwise when viewed from outside the
      // surface; reverse for outward-facing triangles.
      std::reverse(loop.begin(), loop.end());
      for (size_t k = 1; k + 1 < loop.size(); ++k)
        tab.tris[mask].push_back({loop[0], loop[k], loop[k + 1]});
      tab.loops[mask].push_back(std::move(loop));
    }
  }
  return tab;
}

inline const McTable& mc_table() {
  static const McTable tab = build_mc_table();
  return tab;
}

}  // namespace detail

// Triangulation (as cube-edge index triples) for one corner classification,
// fanned from each contour loop's first vertex.  Extraction instead fans
// loops of four or more vertices from their centroid; see marching_cubes.
inline const std::vector<std::array<int, 3>>& mc_case_triangles(int mask) {
  if (mask < 0 || mask > 255) throw UsageError("mc case out of range");
  return detail::mc_table().tris[mask];
}

// Corner pair (bit-coded positions) of one of the 12 cube edges.
inline std::pair<int, int> mc_edge_corners(int e) {
  if (e < 0 || e > 11) throw UsageError("mc edge out of range");
  return detail::mc_table().edge_corners[e];
}

// Iso-surface extraction over the grid padded with a zero shell, so every
// surface closes.  A corner is inside when its value exceeds iso.  Vertices
// are interpolated along crossing cube edges, welded by lattice edge so the
// output is indexed-watertight, and mapped through the grid's transform into
// world coordinates.
inline TriMesh marching_cubes(const VoxelGrid& grid, double iso = 0.5) {
  if (grid.w < 2 || grid.h < 2 || grid.d < 2)
    throw UsageError(strfmt("marching_cubes: dims %dx%dx%d below 2 per axis",
                            grid.w, grid.h, grid.d));
  if (!(iso > 0.0 && iso < 1.0))
    throw UsageError(strfmt("marching_cubes: iso %g outside (0,1)", iso));
  const auto& tab = detail::mc_table();

  const auto value = [&](int x, int y, int z) -> double {
    if (x < 0 || y < 0 || z < 0 || x >= grid.w || y >= grid.h || z >= grid.d)
      return 0.0;
    return grid.values[grid.index(x, y, z)];
  };

  TriMesh out;
  std::unordered_map<int64_t, int> weld;
  const int64_t sx = 1, sy = grid.w + 2, sz = static_cast<int64_t>(grid.w + 2) * (grid.h + 2);

  for (int z = -1; z < grid.d; ++z)
    for (int y = -1; y < grid.h; ++y)
      for (int x = -1; x < grid.w; ++x) {
        double val[8];
        int mask = 0;
        for (int i = 0; i < 8; ++i) {
          val[i] = value(x + (i & 1), y + ((i >> 1) & 1), z + ((i >> 2) & 1));
          if (val[i] > iso) mask |= 1 << i;
        }
        if (tab.loops[mask].empty()) continue;
        const int64_t base = (x + 1) * sx + (y + 1) * sy + (z + 1) * sz;
        const auto edge_vertex = [&](int e) {
          const auto [ca, cb] = tab.edge_corners[e];
          const int axis = (ca ^ cb) == 1 ? 0 : (ca ^ cb) == 2 ? 1 : 2;
          const int64_t lp = base + (ca & 1) * sx + ((ca >> 1) & 1) * sy +
                             ((ca >> 2) & 1) * sz;
          const int64_t key = lp * 3 + axis;
          auto [it, fresh] = weld.emplace(key, static_cast<int>(out.vertices.size()));
          if (fresh) {
            const double t = (iso - val[ca]) / (val[cb] - val[ca]);
            std::array<double, 3> g = {x + (ca & 1) + 0.5, y + ((ca >> 1) & 1) + 0.5,
                                       z + ((ca >> 2) & 1) + 0.5};
            g[axis] += t;
            const auto p = grid.transform.to_world(g);
            out.vertices.push_back({p[0], p[1], p[2]});
          }
          return it->second;
        };
        for (const auto& loop : tab.loops[mask]) {
          std::vector<int> vid(loop.size());
          for (size_t k = 0; k < loop.size(); ++k) vid[k] = edge_vertex(loop[k]);
          if (vid.size() == 3) {
            out.triangles.push_back({vid[0], vid[1], vid[2]});
            continue;
          }
          // A fan rooted at a loop vertex can drop a diagonal into a face
          // plane, where the neighbouring cube may emit the same segment —
          // two sheets touching along an edge, which breaks manifoldness.
          // Spokes to a loop-private centroid can never collide.
          Vec3 c = {0.0, 0.0, 0.0};
          for (int v : vid) c = c + out.vertices[v];
          c = (1.0 / static_cast<double>(vid.size())) * c;
          const int ci = static_cast<int>(out.vertices.size());
          out.vertices.push_back(c);
          for (size_t k = 0; k < vid.size(); ++k)
            out.triangles.push_back(
                {ci, vid[k], vid[(k + 1) % vid.size()]});
        }
      }
  return out;
}

}  // namespace vrn
