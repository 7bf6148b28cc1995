#include "vrn/trimesh.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <sstream>

#include "geometry_test_util.hpp"
#include "vrn/rng.hpp"

using vrn::operator+;
using vrn::operator-;
using vrn::operator*;
using vrn::Rng;
using vrn::TriMesh;
using vrn::Vec3;
using vrn_test::make_box;

namespace {

std::string temp_path(const char* name) {
  return std::string(::testing::TempDir()) + name;
}

TriMesh random_mesh(int nv, int nt, Rng& rng) {
  TriMesh m;
  for (int i = 0; i < nv; ++i)
    m.vertices.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)});
  while (static_cast<int>(m.triangles.size()) < nt) {
    int a = rng.uniform_int(0, nv - 1), b = rng.uniform_int(0, nv - 1),
        c = rng.uniform_int(0, nv - 1);
    if (a != b && b != c && a != c) m.triangles.push_back({a, b, c});
  }
  return m;
}

TEST(ObjIo, LoadsCubeFile) {
  TriMesh cube = make_box({0, 0, 0}, {0.5, 0.5, 0.5});
  std::ostringstream os;
  for (const auto& v : cube.vertices)
    os << "v " << v[0] << ' ' << v[1] << ' ' << v[2] << "\n";
  for (const auto& t : cube.triangles)
    os << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << "\n";
  std::istringstream is(os.str());
  TriMesh m = vrn::parse_obj(is, "cube");
  ASSERT_EQ(m.vertices.size(), 8u);
  ASSERT_EQ(m.triangles.size(), 12u);
  EXPECT_EQ(m.triangles, cube.triangles);
  EXPECT_EQ(m.vertices[7], (Vec3{0.5, 0.5, 0.5}));
}

TEST(ObjIo, QuadFacesFanTriangulate) {
  std::istringstream is(
      "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
      "f 1 2 3 4\n");
  TriMesh m = vrn::parse_obj(is, "quad");
  ASSERT_EQ(m.triangles.size(), 2u);
  EXPECT_EQ(m.triangles[0], (std::array<int, 3>{0, 1, 2}));
  EXPECT_EQ(m.triangles[1], (std::array<int, 3>{0, 2, 3}));
}

TEST(ObjIo, SlashSuffixesAndNegativeIndices) {
  std::istringstream is(
      "v 0 0 0\nv 1 0 0\nv 0 1 0\n"
      "f 1/4 2/5/6 -1\n");
  TriMesh m = vrn::parse_obj(is, "slashes");
  ASSERT_EQ(m.triangles.size(), 1u);
  EXPECT_EQ(m.triangles[0], (std::array<int, 3>{0, 1, 2}));
}

TEST(ObjIo, IgnoresRecordsOutsideSubset) {
  std::istringstream is(
      "# comment\n\nmtllib scene.mtl\no body\nvn 0 0 1\nvt 0.5 0.5\ns off\n"
      "v 0 0 0\nv 1 0 0\nv 0 1 0\nusemtl skin\nf 1 2 3\n");
  TriMesh m = vrn::parse_obj(is, "mixed");
  EXPECT_EQ(m.vertices.size(), 3u);
  EXPECT_EQ(m.triangles.size(), 1u);
}

TEST(ObjIo, MalformedRecordsCarryLineNumbers) {
  const struct {
    const char* text;
    const char* line;
  } bad[] = {
      {"v 0 0 0\nv 1 2\n", "line 2"},           // short vertex
      {"v 0 0 0\nf 1 1e2 1\n", "line 2"},       // junk index (trailing chars)
      {"v 0 0 0\nf 1 2 3\n", "line 2"},         // out of range
      {"v 0 0 0\nf 0 1 1\n", "line 2"},         // obj indices are 1-based
      {"v 0 0 0\nv 1 0 0\nf 1 2\n", "line 3"},  // face too short
  };
  for (const auto& c : bad) {
    std::istringstream is(c.text);
    try {
      vrn::parse_obj(is, "bad");
      FAIL() << "accepted: " << c.text;
    } catch (const vrn::ParseError& e) {
      EXPECT_NE(std::string(e.what()).find(c.line), std::string::npos) << e.what();
    }
  }
}

TEST(ObjIo, FileRoundTripIsExact) {
  Rng rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    TriMesh m = random_mesh(100, 60, rng);
    const std::string path = temp_path("roundtrip.obj");
    vrn::save_obj(m, path);
    TriMesh n = vrn::load_obj(path);
    ASSERT_EQ(n.vertices.size(), m.vertices.size());
    ASSERT_EQ(n.triangles, m.triangles);
    double worst = 0;
    for (size_t i = 0; i < m.vertices.size(); ++i)
      worst = std::max(worst, vrn::norm(n.vertices[i] - m.vertices[i]));
    EXPECT_EQ(worst, 0.0);  // %.17g preserves doubles exactly
  }
  std::remove(temp_path("roundtrip.obj").c_str());
}

TEST(ObjIo, MissingFileRejected) {
  EXPECT_THROW(vrn::load_obj(temp_path("nope.obj")), vrn::IoError);
}

TEST(MeshChecks, ValidateRejectsBadIndices) {
  TriMesh m = make_box({0, 0, 0}, {1, 1, 1});
  m.triangles.push_back({0, 1, 8});
  EXPECT_THROW(vrn::validate_mesh(m), vrn::UsageError);
  m.triangles.back() = {3, 3, 4};
  EXPECT_THROW(vrn::validate_mesh(m), vrn::UsageError);
}

TEST(MeshChecks, BoundaryEdgesAndClosedness) {
  TriMesh cube = make_box({0, 0, 0}, {1, 1, 1});
  EXPECT_TRUE(vrn::boundary_edges(cube).empty());
  EXPECT_NO_THROW(vrn::require_closed(cube, "test"));
  cube.triangles.pop_back();
  EXPECT_EQ(vrn::boundary_edges(cube).size(), 3u);
  try {
    vrn::require_closed(cube, "test");
    FAIL();
  } catch (const vrn::UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("3 bad edges"), std::string::npos) << e.what();
  }
}

TEST(MeshChecks, ComponentsCountVertexConnectedPieces) {
  TriMesh two = make_box({0, 0, 0}, {1, 1, 1});
  TriMesh other = make_box({5, 0, 0}, {1, 1, 1});
  const int base = static_cast<int>(two.vertices.size());
  for (const auto& v : other.vertices) two.vertices.push_back(v);
  for (const auto& t : other.triangles)
    two.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  std::vector<int> label;
  EXPECT_EQ(vrn::triangle_components(two, label), 2);
  for (size_t t = 0; t < two.triangles.size(); ++t)
    EXPECT_EQ(label[t], t < 12 ? 0 : 1);
}

TEST(MeshChecks, AreaAndSignedVolumeOfUnitCube) {
  TriMesh cube = make_box({3, -2, 7}, {0.5, 0.5, 0.5});
  EXPECT_NEAR(vrn::mesh_area(cube), 6.0, 1e-12);
  EXPECT_NEAR(vrn::mesh_signed_volume(cube), 1.0, 1e-12);
  for (auto& t : cube.triangles) std::swap(t[1], t[2]);
  EXPECT_NEAR(vrn::mesh_signed_volume(cube), -1.0, 1e-12);
}

TEST(ZAlign, CentersVertexMeanAtZero) {
  TriMesh m;
  m.vertices = {{4, 5, 1}, {6, 7, 3}};
  TriMesh a = vrn::z_align(m);
  EXPECT_EQ(a.vertices[0], (Vec3{4, 5, -1}));
  EXPECT_EQ(a.vertices[1], (Vec3{6, 7, 1}));
  TriMesh b = vrn::z_align(a);  // idempotent
  EXPECT_EQ(b.vertices, a.vertices);
  EXPECT_THROW(vrn::z_align(TriMesh{}), vrn::UsageError);
}

TEST(ScaleAugment, UnitRangeIsIdentity) {
  Rng rng(3);
  TriMesh cube = make_box({1, 2, 3}, {0.5, 0.5, 0.5});
  TriMesh s = vrn::scale_augment(cube, 1.0, 1.0, rng);
  for (size_t i = 0; i < cube.vertices.size(); ++i)
    EXPECT_LT(vrn::norm(s.vertices[i] - cube.vertices[i]), 1e-12);
}

TEST(ScaleAugment, ScalesAboutBoxCenter) {
  Rng rng(3);
  TriMesh cube = make_box({1, 2, 3}, {0.5, 0.5, 0.5});
  TriMesh s = vrn::scale_augment(cube, 2.0, 2.0, rng);
  EXPECT_NEAR(vrn::norm(s.vertices[0] - Vec3{0, 1, 2}), 0.0, 1e-12);
  EXPECT_NEAR(vrn::norm(s.vertices[7] - Vec3{2, 3, 4}), 0.0, 1e-12);
}

TEST(ScaleAugment, SeedDeterminesDraw) {
  TriMesh cube = make_box({0, 0, 0}, {1, 1, 1});
  Rng r1(9), r2(9), r3(10);
  TriMesh a = vrn::scale_augment(cube, 0.8, 1.2, r1);
  TriMesh b = vrn::scale_augment(cube, 0.8, 1.2, r2);
  TriMesh c = vrn::scale_augment(cube, 0.8, 1.2, r3);
  EXPECT_EQ(a.vertices, b.vertices);
  EXPECT_NE(a.vertices, c.vertices);
  EXPECT_THROW(vrn::scale_augment(cube, 0.0, 1.0, r1), vrn::UsageError);
  EXPECT_THROW(vrn::scale_augment(cube, 1.5, 1.2, r1), vrn::UsageError);
}

}  // namespace
