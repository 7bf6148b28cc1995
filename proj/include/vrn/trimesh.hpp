#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vrn/common.hpp"
#include "vrn/rng.hpp"

namespace vrn {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
  double n = norm(a);
  return n > 0 ? (1.0 / n) * a : a;
}

// Indexed triangle mesh in model units.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
};

// Index range and degeneracy invariants; throws UsageError on violation.
inline void validate_mesh(const TriMesh& m) {
  const int nv = static_cast<int>(m.vertices.size());
  for (size_t t = 0; t < m.triangles.size(); ++t) {
    const auto& tri = m.triangles[t];
    for (int k = 0; k < 3; ++k)
      if (tri[k] < 0 || tri[k] >= nv)
        throw UsageError(strfmt("triangle %zu: vertex index %d out of range [0,%d)",
                                t, tri[k], nv));
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw UsageError(strfmt("triangle %zu: repeated vertex index", t));
  }
}

// Undirected edges not shared by exactly two triangles.  Empty means closed.
inline std::vector<std::pair<int, int>> boundary_edges(const TriMesh& m) {
  std::map<std::pair<int, int>, int> uses;
  for (const auto& tri : m.triangles)
    for (int k = 0; k < 3; ++k) {
      int a = tri[k], b = tri[(k + 1) % 3];
      uses[{std::min(a, b), std::max(a, b)}]++;
    }
  std::vector<std::pair<int, int>> out;
  for (const auto& [e, n] : uses)
    if (n != 2) out.push_back(e);
  return out;
}

inline void require_closed(const TriMesh& m, const char* what) {
  auto bad = boundary_edges(m);
  if (bad.empty()) return;
  std::string msg = strfmt("%s: mesh is not closed; %zu bad edges:", what, bad.size());
  for (size_t i = 0; i < bad.size() && i < 8; ++i)
    msg += strfmt(" (%d,%d)", bad[i].first, bad[i].second);
  if (bad.size() > 8) msg += " ...";
  throw UsageError(msg);
}

// Per-triangle connected-component labels (components joined by shared
// vertices); returns the number of components.
inline int triangle_components(const TriMesh& m, std::vector<int>& label) {
  std::vector<int> parent(m.vertices.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& tri : m.triangles) {
    int a = find(tri[0]);
    parent[find(tri[1])] = a;
    parent[find(tri[2])] = a;
  }
  std::map<int, int> ids;
  label.assign(m.triangles.size(), 0);
  for (size_t t = 0; t < m.triangles.size(); ++t) {
    int root = find(m.triangles[t][0]);
    auto [it, fresh] = ids.emplace(root, static_cast<int>(ids.size()));
    label[t] = it->second;
  }
  return static_cast<int>(ids.size());
}

inline double mesh_area(const TriMesh& m) {
  double a = 0;
  for (const auto& tri : m.triangles)
    a += 0.5 * norm(cross(m.vertices[tri[1]] - m.vertices[tri[0]],
                          m.vertices[tri[2]] - m.vertices[tri[0]]));
  return a;
}

// Divergence-theorem volume; positive for closed meshes with outward-facing
// triangle winding.
inline double mesh_signed_volume(const TriMesh& m) {
  double v = 0;
  for (const auto& tri : m.triangles)
    v += dot(m.vertices[tri[0]],
             cross(m.vertices[tri[1]], m.vertices[tri[2]])) / 6.0;
  return v;
}

namespace detail {

inline int parse_obj_index(const std::string& tok, int nv, int line) {
  // "f" entries may carry /vt/vn suffixes; only the vertex index is used.
  size_t slash = tok.find('/');
  std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
  int idx = 0;
  try {
    size_t pos = 0;
    idx = std::stoi(head, &pos);
    if (pos != head.size()) throw std::invalid_argument(head);
  } catch (const std::exception&) {
    throw ParseError(strfmt("obj line %d: bad face index '%s'", line, tok.c_str()));
  }
  if (idx < 0) idx = nv + idx;  // negative indices are relative to the end
  else idx -= 1;                // obj is 1-based
  if (idx < 0 || idx >= nv)
    throw ParseError(strfmt("obj line %d: face index %s out of range", line, tok.c_str()));
  return idx;
}

}  // namespace detail

// Minimal OBJ reader: `v` and `f` records (faces fan-triangulated); other
// record types are ignored.
inline TriMesh parse_obj(std::istream& in, const std::string& what) {
  TriMesh m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p[0] >> p[1] >> p[2]))
        throw ParseError(strfmt("%s line %d: malformed vertex", what.c_str(), lineno));
      m.vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok)
        idx.push_back(detail::parse_obj_index(tok, static_cast<int>(m.vertices.size()), lineno));
      if (idx.size() < 3)
        throw ParseError(strfmt("%s line %d: face needs at least 3 vertices", what.c_str(), lineno));
      for (size_t k = 1; k + 1 < idx.size(); ++k)
        m.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
    // vn/vt/o/g/s/usemtl/... are outside the supported subset; skip.
  }
  validate_mesh(m);
  return m;
}

inline TriMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_obj(in, path);
}

inline void save_obj(const TriMesh& m, const std::string& path) {
  validate_mesh(m);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  char buf[128];
  for (const auto& v : m.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v[0], v[1], v[2]);
    out << buf;
  }
  for (const auto& t : m.triangles)
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw IoError("write failed: " + path);
}

// Translates along Z so the vertex mean is zero; X,Y untouched.
inline TriMesh z_align(const TriMesh& m) {
  if (m.vertices.empty()) throw UsageError("z_align: empty mesh");
  double mean = 0;
  for (const auto& v : m.vertices) mean += v[2];
  mean /= static_cast<double>(m.vertices.size());
  TriMesh out = m;
  for (auto& v : out.vertices) v[2] -= mean;
  return out;
}

// Uniform scale by s ~ U[lo,hi] about the bounding-box center.
inline TriMesh scale_augment(const TriMesh& m, double lo, double hi, Rng& rng) {
  if (!(0 < lo && lo <= hi))
    throw UsageError(strfmt("scale_augment: bad range [%g,%g]", lo, hi));
  if (m.vertices.empty()) throw UsageError("scale_augment: empty mesh");
  const double s = rng.uniform(lo, hi);
  Vec3 bmin = m.vertices[0], bmax = m.vertices[0];
  for (const auto& v : m.vertices)
    for (int k = 0; k < 3; ++k) {
      bmin[k] = std::min(bmin[k], v[k]);
      bmax[k] = std::max(bmax[k], v[k]);
    }
  const Vec3 c = 0.5 * (bmin + bmax);
  TriMesh out = m;
  for (auto& v : out.vertices) v = c + s * (v - c);
  return out;
}

}  // namespace vrn
