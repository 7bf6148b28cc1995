#include "vrn/voxelize.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "geometry_test_util.hpp"
#include "vrn/rng.hpp"
#include "vrn/trimesh.hpp"
#include "vrn/voxelgrid.hpp"

using vrn::GridTransform;
using vrn::InsideTester;
using vrn::operator+;
using vrn::operator-;
using vrn::operator*;
using vrn::Rng;
using vrn::TriMesh;
using vrn::Vec3;
using vrn::VoxelGrid;
using vrn_test::make_box;
using vrn_test::make_uv_sphere;

namespace {

TriMesh merge(const TriMesh& a, const TriMesh& b) {
  TriMesh m = a;
  const int base = static_cast<int>(m.vertices.size());
  for (const auto& v : b.vertices) m.vertices.push_back(v);
  for (const auto& t : b.triangles)
    m.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  return m;
}

TEST(PointInMesh, CubeInsideFarOutside) {
  TriMesh cube = make_box({0, 0, 0}, {0.5, 0.5, 0.5});
  EXPECT_TRUE(vrn::point_in_mesh(cube, {0, 0, 0}));
  EXPECT_FALSE(vrn::point_in_mesh(cube, {10, 0, 0}));
  EXPECT_TRUE(vrn::point_in_mesh(cube, {0.49, -0.49, 0.49}));
  EXPECT_FALSE(vrn::point_in_mesh(cube, {0.51, 0, 0}));
}

TEST(PointInMesh, AgreesWithAnalyticSphereSdf) {
  const double r = 1.0;
  TriMesh sphere = make_uv_sphere({0.2, -0.1, 0.3}, r, 48, 48);
  InsideTester tester(sphere);
  Rng rng(17);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p = {0.2 + rng.uniform(-1.5, 1.5), -0.1 + rng.uniform(-1.5, 1.5),
                    0.3 + rng.uniform(-1.5, 1.5)};
    const double sdf = vrn::norm(p - Vec3{0.2, -0.1, 0.3}) - r;
    if (std::abs(sdf) < 0.01 * r) continue;  // tessellation shell
    ++checked;
    EXPECT_EQ(tester.inside(p), sdf < 0) << "at sdf " << sdf;
  }
  EXPECT_GT(checked, 900);
}

TEST(PointInMesh, OpenMeshRejectedWithBoundaryEdges) {
  TriMesh cube = make_box({0, 0, 0}, {1, 1, 1});
  cube.triangles.pop_back();
  try {
    vrn::point_in_mesh(cube, {0, 0, 0});
    FAIL();
  } catch (const vrn::UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("not closed"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("("), std::string::npos) << e.what();
  }
}

TEST(PointInMesh, OverlappingClosedComponentsActAsUnion) {
  // Two interpenetrating spheres: global ray parity would call the overlap
  // region outside; per-component parity OR must call it inside.
  TriMesh two = merge(make_uv_sphere({0, 0, 0}, 1.0, 24, 24),
                      make_uv_sphere({1.2, 0, 0}, 1.0, 24, 24));
  InsideTester tester(two);
  EXPECT_TRUE(tester.inside({0.6, 0, 0}));   // inside both
  EXPECT_TRUE(tester.inside({-0.5, 0, 0}));  // inside first only
  EXPECT_TRUE(tester.inside({1.7, 0, 0}));   // inside second only
  EXPECT_FALSE(tester.inside({3.0, 0, 0}));
  EXPECT_FALSE(tester.inside({0.6, 1.2, 0}));
}

TEST(Voxelize, CentralBoxByExplicitTransform) {
  // Unit box mapped onto the central half-extent of an 8^3 grid: the 4^3
  // centers strictly inside are exactly the set voxels.
  TriMesh box = make_box({0, 0, 0}, {0.5, 0.5, 0.5});
  GridTransform t{4.0, {4.0, 4.0, 4.0}};  // box spans [2,6]^3
  VoxelGrid g = vrn::voxelize(box, {8, 8, 8}, t);
  InsideTester oracle(box);
  long long set = 0;
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const bool want = x >= 2 && x < 6 && y >= 2 && y < 6 && z >= 2 && z < 6;
        EXPECT_EQ(g.at(x, y, z), want ? 1.0f : 0.0f) << x << "," << y << "," << z;
        set += g.at(x, y, z) != 0.0f;
        const auto w = t.to_world({x + 0.5, y + 0.5, z + 0.5});
        EXPECT_EQ(oracle.inside({w[0], w[1], w[2]}), g.at(x, y, z) != 0.0f);
      }
  EXPECT_EQ(set, 64);
}

TEST(Voxelize, UnitSphereOccupancyMatchesAnalyticVolume) {
  TriMesh sphere = make_uv_sphere({0, 0, 0}, 1.0, 64, 64);
  VoxelGrid g = vrn::voxelize(sphere, {64, 64, 64});
  long long set = 0;
  for (float v : g.values) set += v != 0.0f;
  // Fit maps the diameter to 64 - 2*4 = 56 voxels; the ball fills pi/6 of
  // its bounding cube.
  const double expect = M_PI / 6.0 * 56.0 * 56.0 * 56.0;
  EXPECT_NEAR(static_cast<double>(set), expect, 0.02 * expect);
}

TEST(Voxelize, MatchesInsideOracleAwayFromSurface) {
  const std::array<int, 3> dims = {32, 32, 32};
  const TriMesh meshes[] = {
      make_box({0.13, -0.4, 0.77}, {0.8, 0.5, 0.6}),
      make_uv_sphere({0.05, 0.0, -0.2}, 0.9, 20, 20),
      merge(make_uv_sphere({0, 0, 0}, 0.8, 16, 16),
            make_uv_sphere({0.9, 0.1, 0.2}, 0.7, 16, 16)),
  };
  for (const TriMesh& mesh : meshes) {
    VoxelGrid g = vrn::voxelize(mesh, dims);
    InsideTester oracle(mesh);
    const double shell = 0.5 * std::sqrt(3.0) / g.transform.scale;
    int disagreements_off_shell = 0;
    for (int z = 0; z < dims[2]; ++z)
      for (int y = 0; y < dims[1]; ++y)
        for (int x = 0; x < dims[0]; ++x) {
          const auto w = g.transform.to_world({x + 0.5, y + 0.5, z + 0.5});
          const Vec3 p = {w[0], w[1], w[2]};
          if (oracle.inside(p) == (g.at(x, y, z) != 0.0f)) continue;
          if (vrn_test::mesh_distance(p, mesh) > shell) ++disagreements_off_shell;
        }
    EXPECT_EQ(disagreements_off_shell, 0);
  }
}

TEST(Voxelize, FitRuleScalesMarginsAndCentersZMean) {
  TriMesh box = make_box({10, 20, 30}, {2, 1, 0.5});
  GridTransform t = vrn::fit_transform(box, {64, 64, 32});
  EXPECT_DOUBLE_EQ(t.scale, 14.0);  // (64-8)/4: X is the filling axis
  const auto lo = t.to_grid({8, 19, 30});
  EXPECT_NEAR(lo[0], 4.0, 1e-9);    // margin 4 on the filling axis
  EXPECT_NEAR(lo[1], 18.0, 1e-9);   // Y centered
  EXPECT_NEAR(lo[2], 16.0, 1e-9);   // vertex mean Z at the grid Z center
  const auto hi = t.to_grid({12, 21, 29.5});
  EXPECT_NEAR(hi[0], 60.0, 1e-9);
  EXPECT_NEAR(hi[1], 46.0, 1e-9);
  EXPECT_NEAR(hi[2], 9.0, 1e-9);

  EXPECT_THROW(vrn::fit_transform(box, {8, 8, 8}), vrn::UsageError);
  TriMesh flat;
  flat.vertices = {{1, 2, 3}, {1, 2, 9}};
  EXPECT_THROW(vrn::fit_transform(flat, {64, 64, 64}), vrn::UsageError);
  EXPECT_THROW(vrn::fit_transform(TriMesh{}, {64, 64, 64}), vrn::UsageError);
}

TEST(Voxelize, ProducesNonEmptyGridAtSixteenCubed) {
  TriMesh sphere = make_uv_sphere({0, 0, 0}, 1.0, 12, 12);
  VoxelGrid g = vrn::voxelize(sphere, {16, 16, 16});
  long long set = 0;
  for (float v : g.values) set += v != 0.0f;
  EXPECT_GE(set, 1);
}

TEST(Voxelize, CommutesWithScaleAugmentation) {
  // The fit rule re-normalizes a uniform scale about the volume center, so
  // voxelize(scale_augment(m)) reproduces voxelize(m).
  TriMesh sphere = make_uv_sphere({0.3, 0.1, -0.2}, 1.0, 24, 24);
  VoxelGrid base = vrn::voxelize(sphere, {64, 64, 64});
  Rng rng(23);
  for (int rep = 0; rep < 3; ++rep) {
    TriMesh scaled = vrn::scale_augment(sphere, 0.9, 1.1, rng);
    VoxelGrid g = vrn::voxelize(scaled, {64, 64, 64});
    EXPECT_GE(vrn::iou(base, g), 0.99);
  }
}

TEST(Voxelize, RejectsOpenMeshes) {
  TriMesh cube = make_box({0, 0, 0}, {1, 1, 1});
  cube.triangles.pop_back();
  EXPECT_THROW(vrn::voxelize(cube, {16, 16, 16},
                             GridTransform{4.0, {8.0, 8.0, 8.0}}),
               vrn::UsageError);
}

}  // namespace
