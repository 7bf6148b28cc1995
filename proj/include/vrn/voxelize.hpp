#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "vrn/common.hpp"
#include "vrn/trimesh.hpp"
#include "vrn/voxelgrid.hpp"

namespace vrn {

namespace detail {

// Crossing of a +Z ray at (px,py) with one triangle, in whatever space the
// vertices live in.  Outcomes: miss, hit (z filled in), or graze (the ray
// passes within tolerance of an edge/vertex or a Z-degenerate triangle, so
// parity cannot be trusted and the caller must re-cast with jitter).
enum class RayHit { kMiss, kHit, kGraze };

inline RayHit ray_z_triangle(double px, double py, const Vec3& a, const Vec3& b,
                             const Vec3& c, double& z) {
  const double d1x = b[0] - a[0], d1y = b[1] - a[1];
  const double d2x = c[0] - a[0], d2y = c[1] - a[1];
  const double area2 = d1x * d2y - d1y * d2x;
  const double ex = px - a[0], ey = py - a[1];
  const double span = std::max({std::abs(d1x), std::abs(d1y), std::abs(d2x),
                                std::abs(d2y)});
  if (std::abs(area2) <= 1e-12 * span * span) {
    // Triangle is edge-on to the ray; treat proximity as grazing.
    const double lo_x = std::min({a[0], b[0], c[0]}), hi_x = std::max({a[0], b[0], c[0]});
    const double lo_y = std::min({a[1], b[1], c[1]}), hi_y = std::max({a[1], b[1], c[1]});
    const double pad = 1e-9 * (1.0 + span);
    if (px >= lo_x - pad && px <= hi_x + pad && py >= lo_y - pad && py <= hi_y + pad)
      return RayHit::kGraze;
    return RayHit::kMiss;
  }
  const double w1 = (ex * d2y - ey * d2x) / area2;
  const double w2 = (d1x * ey - d1y * ex) / area2;
  const double w0 = 1.0 - w1 - w2;
  const double tol = 1e-9;
  if (w0 < -tol || w1 < -tol || w2 < -tol) return RayHit::kMiss;
  if (w0 < tol || w1 < tol || w2 < tol) return RayHit::kGraze;
  z = a[2] + w1 * (b[2] - a[2]) + w2 * (c[2] - a[2]);
  return RayHit::kHit;
}

// Deterministic jitter directions (golden-angle spiral), used to re-cast
// grazing rays a hair off the original column.
inline void jitter_offset(int attempt, double scale, double& dx, double& dy) {
  const double ang = 2.39996322972865332 * attempt;
  const double r = 1e-4 * attempt * scale;
  dx = r * std::cos(ang);
  dy = r * std::sin(ang);
}

// All +Z crossings of the triangle list at (px,py); re-casts with jitter
// until no triangle grazes and the parity is even (closed input), giving up
// (and keeping the last answer) after a fixed number of attempts.
inline bool ray_z_crossings(double px, double py, const TriMesh& m,
                            const std::vector<int>& tris, double feature_scale,
                            std::vector<double>& zs) {
  for (int attempt = 0; attempt < 16; ++attempt) {
    double dx = 0, dy = 0;
    if (attempt > 0) jitter_offset(attempt, feature_scale, dx, dy);
    zs.clear();
    bool grazed = false;
    for (int t : tris) {
      const auto& tri = m.triangles[t];
      double z;
      switch (ray_z_triangle(px + dx, py + dy, m.vertices[tri[0]],
                             m.vertices[tri[1]], m.vertices[tri[2]], z)) {
        case RayHit::kMiss: break;
        case RayHit::kHit: zs.push_back(z); break;
        case RayHit::kGraze: grazed = true; break;
      }
      if (grazed) break;
    }
    if (!grazed && zs.size() % 2 == 0) {
      std::sort(zs.begin(), zs.end());
      return true;
    }
  }
  std::sort(zs.begin(), zs.end());
  return false;
}

}  // namespace detail

// Point-inside test for closed meshes.  Components (vertex-connected pieces)
// are treated as a union of solids: inside any component means inside.  The
// constructor pays the closedness check and XY binning once; use it for bulk
// queries.
class InsideTester {
 public:
  explicit InsideTester(const TriMesh& mesh) : m_(mesh) {
    validate_mesh(m_);
    require_closed(m_, "point_in_mesh");
    if (m_.triangles.empty()) throw UsageError("point_in_mesh: empty mesh");
    ncomp_ = triangle_components(m_, comp_);
    bmin_ = bmax_ = m_.vertices[0];
    for (const auto& v : m_.vertices)
      for (int k = 0; k < 3; ++k) {
        bmin_[k] = std::min(bmin_[k], v[k]);
        bmax_[k] = std::max(bmax_[k], v[k]);
      }
    scale_ = std::max({bmax_[0] - bmin_[0], bmax_[1] - bmin_[1],
                       bmax_[2] - bmin_[2], 1e-12});
    nb_ = std::clamp(static_cast<int>(std::sqrt(m_.triangles.size() / 4.0)), 8, 128);
    bins_.resize(static_cast<size_t>(nb_) * nb_);
    for (size_t t = 0; t < m_.triangles.size(); ++t) {
      const auto& tri = m_.triangles[t];
      double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
      for (int k = 0; k < 3; ++k) {
        lo_x = std::min(lo_x, m_.vertices[tri[k]][0]);
        hi_x = std::max(hi_x, m_.vertices[tri[k]][0]);
        lo_y = std::min(lo_y, m_.vertices[tri[k]][1]);
        hi_y = std::max(hi_y, m_.vertices[tri[k]][1]);
      }
      // Pad one jitter radius so re-cast rays still see the triangle.
      const double pad = 2e-3 * scale_;
      for (int by = bin_of(lo_y - pad, 1); by <= bin_of(hi_y + pad, 1); ++by)
        for (int bx = bin_of(lo_x - pad, 0); bx <= bin_of(hi_x + pad, 0); ++bx)
          bins_[static_cast<size_t>(by) * nb_ + bx].push_back(static_cast<int>(t));
    }
  }

  bool inside(const Vec3& p) const {
    if (p[0] < bmin_[0] || p[0] > bmax_[0] || p[1] < bmin_[1] ||
        p[1] > bmax_[1] || p[2] < bmin_[2] || p[2] > bmax_[2])
      return false;
    const auto& cand =
        bins_[static_cast<size_t>(bin_of(p[1], 1)) * nb_ + bin_of(p[0], 0)];
    std::vector<std::vector<int>> per_comp(ncomp_);
    for (int t : cand) per_comp[comp_[t]].push_back(t);
    std::vector<double> zs;
    for (int c = 0; c < ncomp_; ++c) {
      if (per_comp[c].empty()) continue;
      detail::ray_z_crossings(p[0], p[1], m_, per_comp[c], scale_, zs);
      size_t above = 0;
      for (double z : zs) above += z > p[2];
      if (above % 2 == 1) return true;
    }
    return false;
  }

 private:
  int bin_of(double v, int axis) const {
    const double t = (v - bmin_[axis]) / (bmax_[axis] - bmin_[axis] + 1e-300);
    return std::clamp(static_cast<int>(t * nb_), 0, nb_ - 1);
  }

  TriMesh m_;
  std::vector<int> comp_;
  int ncomp_ = 0, nb_ = 0;
  Vec3 bmin_{}, bmax_{};
  double scale_ = 1;
  std::vector<std::vector<int>> bins_;
};

inline bool point_in_mesh(const TriMesh& mesh, const Vec3& p) {
  return InsideTester(mesh).inside(p);
}

// Fit rule: uniform scale filling the grid's XY cross-section up to a fixed
// 4-voxel margin on each side, XY bounding-box center at the grid's XY
// center, and the vertex Z mean at the grid's Z center.
inline GridTransform fit_transform(const TriMesh& mesh, const std::array<int, 3>& dims) {
  constexpr double kMargin = 4.0;
  const int w = dims[0], h = dims[1], d = dims[2];
  if (w <= 2 * kMargin || h <= 2 * kMargin)
    throw UsageError(strfmt("fit_transform: dims %dx%dx%d too small for margin 4", w, h, d));
  if (mesh.vertices.empty()) throw UsageError("fit_transform: empty mesh");
  Vec3 bmin = mesh.vertices[0], bmax = mesh.vertices[0];
  double zsum = 0;
  for (const auto& v : mesh.vertices) {
    for (int k = 0; k < 3; ++k) {
      bmin[k] = std::min(bmin[k], v[k]);
      bmax[k] = std::max(bmax[k], v[k]);
    }
    zsum += v[2];
  }
  const double ex = bmax[0] - bmin[0], ey = bmax[1] - bmin[1];
  if (ex <= 0 && ey <= 0) throw UsageError("fit_transform: mesh has no XY extent");
  double s = 1e300;
  if (ex > 0) s = std::min(s, (w - 2 * kMargin) / ex);
  if (ey > 0) s = std::min(s, (h - 2 * kMargin) / ey);
  GridTransform t;
  t.scale = s;
  t.offset = {0.5 * w - s * 0.5 * (bmin[0] + bmax[0]),
              0.5 * h - s * 0.5 * (bmin[1] + bmax[1]),
              0.5 * d - s * zsum / static_cast<double>(mesh.vertices.size())};
  return t;
}

// Binary occupancy by per-column +Z ray parity at voxel centers, one parity
// stream per connected component, OR'd (components are union solids).
// Exactly point_in_mesh at every center, modulo the surface shell.
inline VoxelGrid voxelize(const TriMesh& mesh, const std::array<int, 3>& dims,
                          const GridTransform& transform) {
  validate_mesh(mesh);
  require_closed(mesh, "voxelize");
  const int w = dims[0], h = dims[1], d = dims[2];
  VoxelGrid grid(w, h, d, true);
  grid.transform = transform;

  TriMesh gm;  // mesh in grid coordinates
  gm.vertices.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) {
    auto g = transform.to_grid(v);
    gm.vertices.push_back({g[0], g[1], g[2]});
  }
  gm.triangles = mesh.triangles;

  std::vector<int> comp;
  const int ncomp = triangle_components(gm, comp);

  // Bucket triangles by the voxel columns their XY bounding box touches.
  std::vector<std::vector<int>> cols(static_cast<size_t>(w) * h);
  const double pad = 0.51;  // covers jittered re-casts
  for (size_t t = 0; t < gm.triangles.size(); ++t) {
    const auto& tri = gm.triangles[t];
    double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
    for (int k = 0; k < 3; ++k) {
      lo_x = std::min(lo_x, gm.vertices[tri[k]][0]);
      hi_x = std::max(hi_x, gm.vertices[tri[k]][0]);
      lo_y = std::min(lo_y, gm.vertices[tri[k]][1]);
      hi_y = std::max(hi_y, gm.vertices[tri[k]][1]);
    }
    const int x0 = std::max(0, static_cast<int>(std::ceil(lo_x - pad - 0.5)));
    const int x1 = std::min(w - 1, static_cast<int>(std::floor(hi_x + pad - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(lo_y - pad - 0.5)));
    const int y1 = std::min(h - 1, static_cast<int>(std::floor(hi_y + pad - 0.5)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        cols[static_cast<size_t>(y) * w + x].push_back(static_cast<int>(t));
  }

  std::vector<std::vector<int>> per_comp(ncomp);
  std::vector<double> zs;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto& cand = cols[static_cast<size_t>(y) * w + x];
      if (cand.empty()) continue;
      for (auto& pc : per_comp) pc.clear();
      for (int t : cand) per_comp[comp[t]].push_back(t);
      const double px = x + 0.5, py = y + 0.5;
      for (int c = 0; c < ncomp; ++c) {
        if (per_comp[c].empty()) continue;
        detail::ray_z_crossings(px, py, gm, per_comp[c], 1.0, zs);
        // Walk voxel centers against the sorted crossing list; odd count
        // below a center means inside.
        size_t ptr = 0;
        for (int z = 0; z < d; ++z) {
          const double zc = z + 0.5;
          while (ptr < zs.size() && zs[ptr] < zc) ++ptr;
          if (ptr % 2 == 1) grid.at(x, y, z) = 1.0f;
        }
      }
    }
  return grid;
}

inline VoxelGrid voxelize(const TriMesh& mesh, const std::array<int, 3>& dims) {
  return voxelize(mesh, dims, fit_transform(mesh, dims));
}

}  // namespace vrn
