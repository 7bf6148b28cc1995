#pragma once

// Synthetic articulated-body data.  A fixed-topology capsule skeleton is
// posed by uniform angle draws, meshed as a union of capsules plus an
// ellipsoid head, voxelized, and rendered orthographically through the same
// world-to-grid transform, so image, mask, landmarks, and volume share one
// pixel lattice by construction.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vrn/common.hpp"
#include "vrn/checkpoint.hpp"
#include "vrn/config.hpp"
#include "vrn/encoding.hpp"
#include "vrn/rng.hpp"
#include "vrn/trimesh.hpp"
#include "vrn/voxelgrid.hpp"
#include "vrn/voxelize.hpp"

namespace vrn {

constexpr int kNumBones = 9;  // capsule bones; the head is an ellipsoid

struct Bone {
  int tail, tip;
  double radius;  // canonical, scaled by the per-body girth draw
  const char* name;
};

// Fixed topology over the landmark joints: a torso spanning pelvis to neck
// plus two-segment limbs.  The head is not listed; it is meshed separately.
inline const std::array<Bone, kNumBones>& bones() {
  static const std::array<Bone, kNumBones> b = {{
      {3, 1, 0.130, "torso"},
      {4, 6, 0.047, "l_upper_arm"},
      {5, 7, 0.047, "r_upper_arm"},
      {6, 8, 0.040, "l_forearm"},
      {7, 9, 0.040, "r_forearm"},
      {10, 12, 0.070, "l_thigh"},
      {11, 13, 0.070, "r_thigh"},
      {12, 14, 0.052, "l_shin"},
      {13, 15, 0.052, "r_shin"},
  }};
  return b;
}

// T-pose joint positions at stature 1, pelvis at the origin.  y grows toward
// the feet (matching image rows), x toward the subject's left, z into depth.
inline std::array<Vec3, kNumLandmarks> canonical_joints() {
  return {{{0.00, -0.70, 0.0}, {0.00, -0.54, 0.0}, {0.00, -0.36, 0.0},
           {0.00, 0.00, 0.0},  {0.20, -0.50, 0.0}, {-0.20, -0.50, 0.0},
           {0.48, -0.50, 0.0}, {-0.48, -0.50, 0.0}, {0.74, -0.50, 0.0},
           {-0.74, -0.50, 0.0}, {0.10, 0.02, 0.0},  {-0.10, 0.02, 0.0},
           {0.12, 0.46, 0.0},  {-0.12, 0.46, 0.0},  {0.13, 0.90, 0.0},
           {-0.13, 0.90, 0.0}}};
}

constexpr int kNumPoseDofs = 17;

inline const std::array<const char*, kNumPoseDofs>& pose_dof_names() {
  static const std::array<const char*, kNumPoseDofs> n = {
      "global_yaw",        "global_pitch",      "global_roll",
      "spine_pitch",       "spine_side",        "l_shoulder_swing",
      "l_shoulder_raise",  "l_elbow_bend",      "r_shoulder_swing",
      "r_shoulder_raise",  "r_elbow_bend",      "l_hip_swing",
      "l_hip_raise",       "l_knee_bend",       "r_hip_swing",
      "r_hip_raise",       "r_knee_bend"};
  return n;
}

struct Skeleton {
  std::array<Vec3, kNumLandmarks> joints{};
  std::array<double, kNumBones> radii{};
  double head_r_axis = 0.0, head_r_perp = 0.0;  // ellipsoid semi-axes
  std::array<double, kNumPoseDofs> dofs{};      // drawn angles, radians
  double stature = 1.0, girth = 1.0;
};

struct Range {
  double lo = 0.0, hi = 0.0;
};

struct PoseLimits {
  std::array<Range, kNumPoseDofs> dof{};
  Range stature{1.0, 1.0};
  Range girth{1.0, 1.0};

  // Zero-width ranges everywhere: sample_pose returns the canonical T-pose.
  static PoseLimits none() { return PoseLimits{}; }

  static PoseLimits defaults() {
    PoseLimits lim;
    const double pi = M_PI;
    lim.dof[0] = {-pi, pi};        // global_yaw
    lim.dof[1] = {-0.20, 0.20};    // global_pitch
    lim.dof[2] = {-0.20, 0.20};    // global_roll
    lim.dof[3] = {-0.30, 0.30};    // spine_pitch
    lim.dof[4] = {-0.25, 0.25};    // spine_side
    for (int side = 0; side < 2; ++side) {
      lim.dof[5 + 3 * side] = {-1.10, 1.10};   // shoulder_swing
      lim.dof[6 + 3 * side] = {-0.90, 0.90};   // shoulder_raise
      lim.dof[7 + 3 * side] = {0.00, 2.00};    // elbow_bend
      lim.dof[11 + 3 * side] = {-0.60, 0.60};  // hip_swing
      lim.dof[12 + 3 * side] = {-0.70, 0.70};  // hip_raise
      lim.dof[13 + 3 * side] = {0.00, 1.90};   // knee_bend
    }
    lim.stature = {0.90, 1.10};
    lim.girth = {0.85, 1.15};
    return lim;
  }
};

inline void validate_limits(const PoseLimits& lim) {
  for (int i = 0; i < kNumPoseDofs; ++i)
    if (lim.dof[i].lo > lim.dof[i].hi)
      throw UsageError(strfmt("pose limit %s has lo > hi", pose_dof_names()[i]));
  if (lim.stature.lo > lim.stature.hi || lim.stature.lo <= 0.0)
    throw UsageError("stature range must be positive with lo <= hi");
  if (lim.girth.lo > lim.girth.hi || lim.girth.lo <= 0.0)
    throw UsageError("girth range must be positive with lo <= hi");
}

// Rodrigues rotation of v about a unit axis.
inline Vec3 rotate_axis(const Vec3& v, const Vec3& axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return c * v + s * cross(axis, v) + ((1.0 - c) * dot(axis, v)) * axis;
}

// Draws one skeleton.  Consumes the generator in a fixed order (stature,
// girth, then each dof), so a given seed always yields the same pose.  Limb
// chains rotate rigidly about their parent joints: bone lengths are whatever
// the stature draw made them, independent of the angles.  Right-side rotation
// axes mirror the left, so equal angles give a left/right symmetric pose.
inline Skeleton sample_pose(Rng& rng, const PoseLimits& limits) {
  validate_limits(limits);
  Skeleton sk;
  sk.stature = rng.uniform(limits.stature.lo, limits.stature.hi);
  sk.girth = rng.uniform(limits.girth.lo, limits.girth.hi);
  for (int i = 0; i < kNumPoseDofs; ++i)
    sk.dofs[i] = rng.uniform(limits.dof[i].lo, limits.dof[i].hi);
  for (int i = 0; i < kNumBones; ++i) sk.radii[i] = bones()[i].radius * sk.girth;
  sk.head_r_axis = 0.115 * sk.stature;
  sk.head_r_perp = 0.092 * sk.stature;

  std::array<Vec3, kNumLandmarks> c = canonical_joints();
  for (auto& p : c) p = sk.stature * p;
  const auto& d = sk.dofs;
  auto& j = sk.joints;

  // Upper body pivots about the pelvis: lean (about x) then side bend (z).
  const auto spine = [&](const Vec3& p) {
    return rotate_axis(rotate_axis(p, {1, 0, 0}, d[3]), {0, 0, 1}, d[4]);
  };
  j[3] = c[3];
  j[2] = spine(c[2]);
  j[1] = spine(c[1]);
  j[0] = spine(c[0]);
  j[4] = spine(c[4]);
  j[5] = spine(c[5]);
  j[10] = c[10];
  j[11] = c[11];

  // Two-segment limb.  The bend flexes the distal segment about bend_ax,
  // then rotation (ax1, a1) and finally (ax2, a2) pose the whole limb.  All
  // axes are in the canonical frame; `post` maps into the posed body.
  const auto limb = [&](int root, int mid, int tip, double a1, const Vec3& ax1,
                        double a2, const Vec3& ax2, double bend,
                        const Vec3& bend_ax, const auto& post) {
    const Vec3 u = rotate_axis(rotate_axis(c[mid] - c[root], ax1, a1), ax2, a2);
    const Vec3 f = rotate_axis(
        rotate_axis(rotate_axis(c[tip] - c[mid], bend_ax, bend), ax1, a1), ax2, a2);
    j[mid] = j[root] + post(u);
    j[tip] = j[mid] + post(f);
  };
  const auto in_spine = [&](const Vec3& v) { return spine(v); };
  const auto in_pelvis = [&](const Vec3& v) { return v; };
  // Arms: raise fore/aft about y, then swing within the image plane about z;
  // elbows flex toward the camera.  Legs: swing apart about z, then kick
  // fore/aft about x; knees flex away from it.
  limb(4, 6, 8, d[6], {0, 1, 0}, d[5], {0, 0, 1}, d[7], {0, 1, 0}, in_spine);
  limb(5, 7, 9, d[9], {0, -1, 0}, d[8], {0, 0, -1}, d[10], {0, -1, 0}, in_spine);
  limb(10, 12, 14, d[11], {0, 0, 1}, d[12], {1, 0, 0}, d[13], {1, 0, 0}, in_pelvis);
  limb(11, 13, 15, d[14], {0, 0, -1}, d[15], {1, 0, 0}, d[16], {1, 0, 0}, in_pelvis);

  // Whole-body view rotation about the pelvis: yaw, then pitch, then roll.
  for (auto& p : j)
    p = rotate_axis(rotate_axis(rotate_axis(p, {0, 1, 0}, d[0]), {1, 0, 0}, d[1]),
                    {0, 0, 1}, d[2]);
  return sk;
}

namespace detail {

inline void orthonormal_basis(const Vec3& w, Vec3& u, Vec3& v) {
  int k = 0;
  if (std::abs(w[1]) < std::abs(w[k])) k = 1;
  if (std::abs(w[2]) < std::abs(w[k])) k = 2;
  Vec3 e = {0, 0, 0};
  e[k] = 1.0;
  u = normalized(cross(w, e));
  v = cross(w, u);
}

// Triangulates a lathe layout: vertex 0 is the +axis pole, then `rows` rings
// of `segs` vertices, then the -axis pole.  Winding is outward for convex
// profiles.
inline void lathe_triangles(TriMesh& m, int rows, int segs) {
  const auto ring = [&](int i, int jj) { return 1 + (i - 1) * segs + (jj % segs); };
  const int south = 1 + rows * segs;
  for (int jj = 0; jj < segs; ++jj) {
    m.triangles.push_back({0, ring(1, jj), ring(1, jj + 1)});
    m.triangles.push_back({south, ring(rows, jj + 1), ring(rows, jj)});
  }
  for (int i = 1; i < rows; ++i)
    for (int jj = 0; jj < segs; ++jj) {
      const int p = ring(i, jj), q = ring(i, jj + 1);
      const int pp = ring(i + 1, jj), qq = ring(i + 1, jj + 1);
      m.triangles.push_back({p, pp, qq});
      m.triangles.push_back({p, qq, q});
    }
}

inline void check_segments(int segments) {
  if (segments < 8 || segments % 4 != 0)
    throw UsageError(strfmt("segments must be >= 8 and divisible by 4, got %d", segments));
}

}  // namespace detail

// Closed capsule from a to b: a cylinder with hemispherical caps, segments/4
// rings per hemisphere.  Vertex count is exactly 2 + 2*segments*(segments/4).
inline TriMesh capsule_mesh(const Vec3& a, const Vec3& b, double r, int segments) {
  detail::check_segments(segments);
  if (r <= 0.0) throw UsageError("capsule radius must be positive");
  const double len = norm(b - a);
  if (len < 1e-9) throw UsageError("capsule axis has zero length");
  const Vec3 w = (1.0 / len) * (b - a);
  Vec3 u, v;
  detail::orthonormal_basis(w, u, v);

  const int segs = segments, rings = segments / 4;
  TriMesh m;
  m.vertices.push_back(b + r * w);
  const auto add_ring = [&](const Vec3& center, double phi) {
    for (int jj = 0; jj < segs; ++jj) {
      const double th = 2.0 * M_PI * jj / segs;
      m.vertices.push_back(center + (r * std::cos(phi)) * w +
                           (r * std::sin(phi)) *
                               (std::cos(th) * u + std::sin(th) * v));
    }
  };
  for (int i = 1; i <= rings; ++i) add_ring(b, 0.5 * M_PI * i / rings);
  for (int i = 0; i < rings; ++i) add_ring(a, 0.5 * M_PI + 0.5 * M_PI * i / rings);
  m.vertices.push_back(a - r * w);
  detail::lathe_triangles(m, 2 * rings, segs);
  return m;
}

// Closed ellipsoid of revolution: semi-axis r_axis along `axis`, r_perp
// across it.  Vertex count is 2 + (segments/2 - 1)*segments.
inline TriMesh ellipsoid_mesh(const Vec3& center, const Vec3& axis, double r_axis,
                              double r_perp, int segments) {
  detail::check_segments(segments);
  if (r_axis <= 0.0 || r_perp <= 0.0)
    throw UsageError("ellipsoid semi-axes must be positive");
  if (norm(axis) < 1e-9) throw UsageError("ellipsoid axis has zero length");
  const Vec3 w = normalized(axis);
  Vec3 u, v;
  detail::orthonormal_basis(w, u, v);

  const int segs = segments, stacks = segments / 2;
  TriMesh m;
  m.vertices.push_back(center + r_axis * w);
  for (int i = 1; i < stacks; ++i) {
    const double phi = M_PI * i / stacks;
    for (int jj = 0; jj < segs; ++jj) {
      const double th = 2.0 * M_PI * jj / segs;
      m.vertices.push_back(center + (r_axis * std::cos(phi)) * w +
                           (r_perp * std::sin(phi)) *
                               (std::cos(th) * u + std::sin(th) * v));
    }
  }
  m.vertices.push_back(center - r_axis * w);
  detail::lathe_triangles(m, stacks - 1, segs);
  return m;
}

// Union-of-solids body: one capsule per bone plus the head ellipsoid, each a
// closed component.  Components may interpenetrate; the voxelizer treats
// them as a union.
inline TriMesh skeleton_to_mesh(const Skeleton& sk, int segments) {
  detail::check_segments(segments);
  TriMesh m;
  const auto append = [&](const TriMesh& part) {
    const int base = static_cast<int>(m.vertices.size());
    m.vertices.insert(m.vertices.end(), part.vertices.begin(), part.vertices.end());
    for (const auto& t : part.triangles)
      m.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  };
  for (int i = 0; i < kNumBones; ++i) {
    const Bone& bn = bones()[i];
    if (norm(sk.joints[bn.tip] - sk.joints[bn.tail]) < 1e-9)
      throw UsageError(strfmt("bone %s has zero length", bn.name));
    append(capsule_mesh(sk.joints[bn.tail], sk.joints[bn.tip], sk.radii[i], segments));
  }
  if (norm(sk.joints[0] - sk.joints[1]) < 1e-9)
    throw UsageError("bone head has zero length");
  append(ellipsoid_mesh(sk.joints[0], sk.joints[0] - sk.joints[1], sk.head_r_axis,
                        sk.head_r_perp, segments));
  return m;
}

namespace detail {

// Largest solid radius around a joint, for the occlusion slack below.
inline double joint_radius(const Skeleton& sk, int j) {
  switch (j) {
    case 0: return sk.head_r_perp;
    case 1: case 2: case 3: return sk.radii[0];
    case 4: case 5: case 6: case 7: return sk.radii[1];
    case 8: case 9: return sk.radii[3];
    case 10: case 11: case 12: case 13: return sk.radii[5];
    default: return sk.radii[7];
  }
}

}  // namespace detail

struct RenderResult {
  Image image;
  LandmarkSet landmarks{};
  Mask mask;
};

// Orthographic Z-buffer rasterizer.  Projects through the same world-to-grid
// transform the voxelizer uses, so pixel (x,y) sees voxel column (x,y); the
// camera looks along +z and smaller z wins.  Shading is flat Lambertian with
// a 0.25 ambient floor; `light` points from the surface toward the light.
// The mask is z-buffer coverage.  A joint's landmark is visible unless the
// surface over its pixel is more than the joint's own solid radius (plus
// 1.5 voxels of slack) in front of it.
inline RenderResult render(const TriMesh& mesh, const Skeleton& sk,
                           const GridTransform& t, int w, int h,
                           const Vec3& light, const std::array<double, 3>& albedo) {
  if (w <= 0 || h <= 0)
    throw UsageError(strfmt("render size %dx%d must be positive", w, h));
  if (t.scale <= 0.0) throw UsageError("render transform scale must be positive");
  const double ln = norm(light);
  if (ln < 1e-12) throw UsageError("light direction must be nonzero");
  const Vec3 lu = (1.0 / ln) * light;

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> zbuf(static_cast<size_t>(w) * h, inf);
  std::vector<float> shade(static_cast<size_t>(w) * h, 0.0f);
  for (const auto& tri : mesh.triangles) {
    const Vec3 g0 = t.to_grid(mesh.vertices[tri[0]]);
    const Vec3 g1 = t.to_grid(mesh.vertices[tri[1]]);
    const Vec3 g2 = t.to_grid(mesh.vertices[tri[2]]);
    const Vec3 n = cross(g1 - g0, g2 - g0);
    const double nn = norm(n);
    if (nn < 1e-18) continue;
    const float bright =
        static_cast<float>(0.25 + 0.75 * std::max(0.0, dot((1.0 / nn) * n, lu)));
    const int x0 = std::max(0, static_cast<int>(std::floor(
                                   std::min({g0[0], g1[0], g2[0]}) - 0.5)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(
                                       std::max({g0[0], g1[0], g2[0]}) - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(
                                   std::min({g0[1], g1[1], g2[1]}) - 0.5)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(
                                       std::max({g0[1], g1[1], g2[1]}) - 0.5)));
    for (int py = y0; py <= y1; ++py)
      for (int px = x0; px <= x1; ++px) {
        const double X = px + 0.5, Y = py + 0.5;
        const double w0 = (g1[0] - g0[0]) * (Y - g0[1]) - (g1[1] - g0[1]) * (X - g0[0]);
        const double w1 = (g2[0] - g1[0]) * (Y - g1[1]) - (g2[1] - g1[1]) * (X - g1[0]);
        const double w2 = (g0[0] - g2[0]) * (Y - g2[1]) - (g0[1] - g2[1]) * (X - g2[0]);
        const bool in = (w0 >= 0 && w1 >= 0 && w2 >= 0) || (w0 <= 0 && w1 <= 0 && w2 <= 0);
        const double area = w0 + w1 + w2;
        if (!in || std::abs(area) < 1e-18) continue;
        const double z = (w0 * g2[2] + w1 * g0[2] + w2 * g1[2]) / area;
        const size_t idx = static_cast<size_t>(py) * w + px;
        if (z < zbuf[idx]) {
          zbuf[idx] = z;
          shade[idx] = bright;
        }
      }
  }

  RenderResult rr{Image(w, h, 3), {}, Mask(w, h)};
  for (int py = 0; py < h; ++py)
    for (int px = 0; px < w; ++px) {
      const size_t idx = static_cast<size_t>(py) * w + px;
      if (zbuf[idx] == inf) continue;
      rr.mask.at(py, px) = 1;
      for (int ch = 0; ch < 3; ++ch)
        rr.image.at(ch, py, px) =
            std::clamp(static_cast<float>(albedo[ch]) * shade[idx], 0.0f, 1.0f);
    }
  for (int j = 0; j < kNumLandmarks; ++j) {
    const Vec3 g = t.to_grid(sk.joints[j]);
    rr.landmarks[j].x = g[0] - 0.5;
    rr.landmarks[j].y = g[1] - 0.5;
    const int px = static_cast<int>(std::lround(rr.landmarks[j].x));
    const int py = static_cast<int>(std::lround(rr.landmarks[j].y));
    bool vis = px >= 0 && px < w && py >= 0 && py < h;
    if (vis) {
      const double zb = zbuf[static_cast<size_t>(py) * w + px];
      vis = zb != inf &&
            zb >= g[2] - (detail::joint_radius(sk, j) * t.scale + 1.5);
    }
    rr.landmarks[j].visible = vis;
  }
  return rr;
}

struct SynthParams {
  std::array<int, 3> dims = {64, 64, 64};
  int segments = 16;
  PoseLimits limits = PoseLimits::defaults();
  // Scale augmentation: the fitted transform is zoomed out by a factor drawn
  // from this range.  Scaling the mesh itself would be undone by the fit.
  double zoom_lo = 0.75, zoom_hi = 1.0;
};

struct Generated {
  Sample sample;
  Skeleton skeleton;
  TriMesh mesh;
  GridTransform transform;
};

// Builds one sample from its own seed.  The fit rule picks its scale from the
// X/Y extents only, so a pose whose depth then overflows the grid is redrawn;
// every attempt reseeds deterministically, making regeneration byte-stable.
// The stored mask is the volume's own silhouette, which keeps the rasters
// exactly aligned; z-buffer coverage may differ on sub-voxel rim pixels.
inline Generated generate_sample(uint64_t seed, const SynthParams& p) {
  validate_limits(p.limits);
  if (p.zoom_lo <= 0.0 || p.zoom_lo > p.zoom_hi || p.zoom_hi > 1.0)
    throw UsageError("zoom range must satisfy 0 < lo <= hi <= 1");
  const int w = p.dims[0], h = p.dims[1], d = p.dims[2];
  for (int attempt = 0; attempt < 64; ++attempt) {
    Rng rng(derive_seed(seed, static_cast<uint64_t>(attempt), 0x5EED));
    Generated g;
    g.skeleton = sample_pose(rng, p.limits);
    g.mesh = skeleton_to_mesh(g.skeleton, p.segments);
    GridTransform t = fit_transform(g.mesh, p.dims);
    const double zoom = rng.uniform(p.zoom_lo, p.zoom_hi);
    t.scale *= zoom;
    const double cg[3] = {0.5 * w, 0.5 * h, 0.5 * d};
    for (int k = 0; k < 3; ++k) t.offset[k] = cg[k] - zoom * (cg[k] - t.offset[k]);
    double zmin = std::numeric_limits<double>::infinity(), zmax = -zmin;
    for (const auto& vtx : g.mesh.vertices) {
      const double gz = t.scale * vtx[2] + t.offset[2];
      zmin = std::min(zmin, gz);
      zmax = std::max(zmax, gz);
    }
    if (zmin < 1.0 || zmax > d - 1.0) continue;
    const Vec3 light =
        normalized({rng.normal(), rng.normal(), -std::abs(rng.normal()) - 0.5});
    const std::array<double, 3> albedo = {
        rng.uniform(0.25, 0.95), rng.uniform(0.25, 0.95), rng.uniform(0.25, 0.95)};
    g.transform = t;
    g.sample.target = voxelize(g.mesh, p.dims, t);
    RenderResult rr = render(g.mesh, g.skeleton, t, w, h, light, albedo);
    g.sample.image = std::move(rr.image);
    g.sample.landmarks = rr.landmarks;
    g.sample.mask = project_silhouette(g.sample.target);
    validate_sample(g.sample);
    return g;
  }
  throw UsageError("no drawn pose fit the volume depth after 64 attempts");
}

struct ManifestEntry {
  int index = 0;
  uint64_t seed = 0;
  // Paths are relative to the dataset directory.
  std::string image, landmarks, mask, volume;
};

// Writes n samples plus a manifest of "index seed image landmarks mask
// volume" lines.  Sample i depends only on (seed, i), so any subset can be
// regenerated independently and the output bytes never depend on generation
// order.
inline std::vector<ManifestEntry> generate_dataset(int n, uint64_t seed,
                                                   const SynthParams& p,
                                                   const std::string& out_dir) {
  if (n < 1) throw UsageError("dataset size must be positive");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
  std::vector<ManifestEntry> entries;
  std::string manifest;
  for (int i = 0; i < n; ++i) {
    ManifestEntry e;
    e.index = i;
    e.seed = derive_seed(seed, static_cast<uint64_t>(i));
    const std::string stem = strfmt("sample_%06d", i);
    e.image = stem + ".ppm";
    e.landmarks = stem + ".lmk";
    e.mask = stem + ".pgm";
    e.volume = stem + ".voxl";
    const Generated g = generate_sample(e.seed, p);
    save_ppm(g.sample.image, out_dir + "/" + e.image);
    save_landmarks(g.sample.landmarks, out_dir + "/" + e.landmarks);
    save_pgm(g.sample.mask, out_dir + "/" + e.mask);
    save_grid(g.sample.target, out_dir + "/" + e.volume);
    manifest += strfmt("%d %llu %s %s %s %s\n", e.index,
                       static_cast<unsigned long long>(e.seed), e.image.c_str(),
                       e.landmarks.c_str(), e.mask.c_str(), e.volume.c_str());
    entries.push_back(std::move(e));
  }
  detail::write_file(out_dir + "/manifest.txt", manifest);
  return entries;
}

inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
  const std::string text = detail::read_file(path);
  std::vector<ManifestEntry> entries;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    unsigned long long s = 0;
    std::string extra;
    if (!(ls >> e.index >> s >> e.image >> e.landmarks >> e.mask >> e.volume) ||
        (ls >> extra))
      throw ParseError(strfmt("%s:%d: want 'index seed image landmarks mask volume'",
                              path.c_str(), lineno));
    e.seed = s;
    entries.push_back(std::move(e));
  }
  return entries;
}

inline Sample load_sample(const std::string& dir, const ManifestEntry& e) {
  Sample s;
  s.image = load_ppm(dir + "/" + e.image);
  s.landmarks = load_landmarks(dir + "/" + e.landmarks);
  s.mask = load_pgm(dir + "/" + e.mask);
  s.target = load_grid(dir + "/" + e.volume);
  validate_sample(s);
  return s;
}

}  // namespace vrn
