#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "gradcheck.hpp"
#include "meshfield/bench.hpp"
#include "meshfield/errors.hpp"
#include "meshfield/mesh.hpp"
#include "temp_dir.hpp"

using namespace meshfield;
using meshfield::testing::read_file;
using meshfield::testing::TempDir;

namespace {

Mesh triangle() {
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}};
  m.colors.assign(3, {kGray, kGray, kGray});
  return m;
}

double norm3(const double* p) { return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]); }

}  // namespace

TEST(LoadObj, MinimalTriangle) {
  TempDir dir;
  const auto p = dir.write("t.obj", "# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  const auto m = load_mesh(p);
  EXPECT_EQ(m.num_vertices(), 3u);
  EXPECT_EQ(m.num_faces(), 1u);
}

TEST(LoadObj, QuadIsFanTriangulated) {
  TempDir dir;
  const auto p = dir.write("q.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\n");
  const auto m = load_mesh(p);
  ASSERT_EQ(m.num_faces(), 2u);
  EXPECT_EQ(m.faces[0], (Face{0, 1, 2}));
  EXPECT_EQ(m.faces[1], (Face{0, 2, 3}));
}

TEST(LoadObj, NegativeIndicesAndVertexColors) {
  TempDir dir;
  const auto p = dir.write("c.obj", "v 0 0 0 1 0 0\nv 1 0 0 0 1 0\nv 0 1 0 0 0 1\nf -3 -2 -1\n");
  const auto m = load_mesh(p);
  EXPECT_EQ(m.faces[0], (Face{0, 1, 2}));
  EXPECT_EQ(m.colors[1], (Vec3{0, 1, 0}));
}

TEST(LoadObj, ParseErrorsCarryLineNumbers) {
  TempDir dir;
  const auto bad_vertex = dir.write("a.obj", "v 0 0 0\nv 1 x 0\n");
  try {
    load_mesh(bad_vertex);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  const auto bad_face = dir.write("b.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\n\nf 1 2 9\n");
  try {
    load_mesh(bad_face);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 5u);
  }
  EXPECT_THROW(load_mesh(dir / "missing.obj"), IoError);
  EXPECT_THROW(load_mesh(dir.write("x.stl", "solid")), InputError);
}

TEST(LoadPly, AsciiColorsScaledFrom255) {
  TempDir dir;
  const auto p = dir.write("a.ply",
                           "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
                           "property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n"
                           "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
                           "0 0 0 255 0 0\n1 0 0 0 255 0\n0 1 0 0 0 51\n3 0 1 2\n");
  const auto m = load_mesh(p);
  ASSERT_EQ(m.num_vertices(), 3u);
  EXPECT_EQ(m.colors[0], (Vec3{1, 0, 0}));
  EXPECT_DOUBLE_EQ(m.colors[2][2], 0.2);
}

TEST(LoadPly, BinaryBigEndianQuad) {
  TempDir dir;
  std::string data =
      "ply\nformat binary_big_endian 1.0\nelement vertex 4\nproperty double x\nproperty double y\n"
      "property double z\nelement face 1\nproperty list uchar uint vertex_indices\nend_header\n";
  auto put_be = [&data](const void* src, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(src);
    for (std::size_t i = 0; i < n; ++i) data.push_back(static_cast<char>(b[n - 1 - i]));
  };
  const double xyz[4][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
  for (const auto& v : xyz)
    for (double c : v) put_be(&c, 8);
  data.push_back(4);
  for (std::uint32_t i = 0; i < 4; ++i) put_be(&i, 4);
  const auto m = load_mesh(dir.write("b.ply", data));
  EXPECT_EQ(m.num_vertices(), 4u);
  EXPECT_EQ(m.num_faces(), 2u);
  EXPECT_EQ(m.vertices[2], (Vec3{1, 1, 0}));
  EXPECT_EQ(m.colors[0], (Vec3{kGray, kGray, kGray}));
}

TEST(LoadPly, MalformedHeaderReportsLine) {
  TempDir dir;
  const auto p = dir.write("m.ply", "ply\nformat ascii 1.0\nelement vertex 3\nbogus thing\nend_header\n");
  try {
    load_mesh(p);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
}

TEST(Normalize, BoundingBoxArithmetic) {
  Mesh m;
  m.faces = {{0, 1, 2}, {0, 2, 3}};
  m.vertices = {{0, 0, 0}, {10, 0, 0}, {10, 10, 10}, {0, 5, 10}};
  m.colors.assign(4, {1, 0, 0});
  const auto n = normalize_and_init(m);
  // Oracle: center 5, scale 0.1.
  for (std::size_t i = 0; i < 4; ++i)
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(n.vertices[i][k], (m.vertices[i][k] - 5.0) * 0.1, 1e-15);
  for (const auto& c : n.colors) EXPECT_EQ(c, (Vec3{0.5, 0.5, 0.5}));
  EXPECT_EQ(n.faces, m.faces);
}

TEST(Normalize, IdempotentAndExtentIsOne) {
  const auto once = normalize_and_init(make_torus(12, 8));
  const auto twice = normalize_and_init(once);
  double lo[3] = {1e9, 1e9, 1e9}, hi[3] = {-1e9, -1e9, -1e9};
  for (std::size_t i = 0; i < once.vertices.size(); ++i)
    for (int k = 0; k < 3; ++k) {
      EXPECT_NEAR(once.vertices[i][k], twice.vertices[i][k], 1e-12);
      lo[k] = std::min(lo[k], once.vertices[i][k]);
      hi[k] = std::max(hi[k], once.vertices[i][k]);
      EXPECT_LE(std::abs(once.vertices[i][k]), 0.5);
    }
  EXPECT_NEAR(std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]}), 1.0, 1e-15);
}

TEST(Normalize, DegenerateInputsThrow) {
  Mesh m = triangle();
  m.vertices = {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}};
  EXPECT_THROW(normalize_and_init(m), GeometryError);
  Mesh two;
  two.vertices = {{0, 0, 0}, {1, 0, 0}};
  EXPECT_THROW(normalize_and_init(two), GeometryError);
}

TEST(ApplyOffsets, ZeroOffsetsIsIdentity) {
  const auto m = normalize_and_init(make_icosphere(1));
  const auto s = apply_offsets(m, ag::Tensor::zeros({m.num_vertices(), 3}), ag::Tensor::zeros({m.num_vertices(), 3}));
  const auto b = s.bake();
  for (std::size_t i = 0; i < m.num_vertices(); ++i) {
    EXPECT_EQ(b.vertices[i], m.vertices[i]);
    EXPECT_EQ(b.colors[i], (Vec3{0.5, 0.5, 0.5}));
  }
}

TEST(ApplyOffsets, RescalesLongOffsetsAndClampsColors) {
  const auto m = triangle();
  auto dp = ag::Tensor::from_vector({3, 3}, {0.3, 0, 0, 0.01, 0, 0, 0, 0.06, 0.08});
  auto dc = ag::Tensor::from_vector({3, 3}, {0.9, -0.9, 0.1, 0, 0, 0, 0, 0, 0});
  const auto s = apply_offsets(m, dc, dp);
  const auto pos_t = s.effective_positions();
  const auto pos = pos_t.data();
  EXPECT_NEAR(pos[0], 0.1, 1e-15);
  EXPECT_NEAR(pos[3], 1.01, 1e-15);
  const auto col_t = s.effective_colors();
  const auto col = col_t.data();
  EXPECT_EQ(col[0], 1.0);
  EXPECT_EQ(col[1], 0.0);
  EXPECT_NEAR(col[2], 0.6, 1e-15);
  EXPECT_LE(s.max_offset_norm(), kMaxOffsetNorm + 1e-9);
  EXPECT_THROW(apply_offsets(m, ag::Tensor::zeros({2, 3}), dp), DimensionError);
}

TEST(ApplyOffsets, RandomOffsetsStayInsideTheBall) {
  const auto m = normalize_and_init(make_icosphere(2));
  const auto dp = meshfield::testing::random_tensor({m.num_vertices(), 3}, 3, -1, 1, false);
  const auto s = apply_offsets(m, ag::Tensor::zeros({m.num_vertices(), 3}), dp);
  const auto eff_t = s.effective_positions();
  const auto eff = eff_t.data();
  for (std::size_t i = 0; i < m.num_vertices(); ++i) {
    const double d[3] = {eff[i * 3] - m.vertices[i][0], eff[i * 3 + 1] - m.vertices[i][1],
                         eff[i * 3 + 2] - m.vertices[i][2]};
    EXPECT_LE(norm3(d), 0.1 + 1e-9);
  }
}

TEST(GrayVariant, KeepsPositionsAndIsIdempotent) {
  const auto m = normalize_and_init(make_icosphere(1));
  const auto n = m.num_vertices();
  const auto s = apply_offsets(m, meshfield::testing::random_tensor({n, 3}, 4, -0.4, 0.4, false),
                               meshfield::testing::random_tensor({n, 3}, 5, -0.05, 0.05, false));
  const auto g = gray_variant(s);
  EXPECT_EQ(g.effective_positions().to_vector(), s.effective_positions().to_vector());
  const auto gc = g.effective_colors();
  for (double c : gc.data()) EXPECT_EQ(c, 0.5);
  EXPECT_EQ(gray_variant(g).effective_colors().to_vector(), g.effective_colors().to_vector());
}

TEST(Normals, UnitLengthAndGradient) {
  const auto m = normalize_and_init(make_icosphere(1));
  for (const auto& n : vertex_normals(m)) EXPECT_NEAR(norm3(n.data()), 1.0, 1e-9);
  for (const auto& n : face_normals(m)) EXPECT_NEAR(norm3(n.data()), 1.0, 1e-9);
  auto p = m.positions_tensor().set_requires_grad(true);
  const auto faces = m.faces;
  auto w = meshfield::testing::random_tensor({m.num_vertices(), 3}, 6, -1, 1, false);
  const auto r = meshfield::testing::grad_check(
      [&](const auto& x) { return ag::sum(vertex_normals(x[0], faces) * w); }, {p}, {.max_probes = 40});
  EXPECT_LE(r.max_rel_error, 1e-6);
  auto wf = meshfield::testing::random_tensor({m.num_faces(), 3}, 7, -1, 1, false);
  const auto rf = meshfield::testing::grad_check(
      [&](const auto& x) { return ag::sum(face_normals(x[0], faces) * wf); }, {p}, {.max_probes = 40});
  EXPECT_LE(rf.max_rel_error, 1e-6);
}

TEST(SaveMesh, ObjLineFormatForGrayOrigin) {
  TempDir dir;
  const auto m = triangle();
  save_mesh(unstyled(m), dir / "t.obj");
  const auto text = read_file(dir / "t.obj");
  EXPECT_NE(text.find("v 0 0 0 0.5 0.5 0.5\n"), std::string::npos) << text;
  EXPECT_NE(text.find("f 1 2 3"), std::string::npos);
}

TEST(SaveMesh, RoundTripBothFormats) {
  TempDir dir;
  auto m = normalize_and_init(make_icosphere(2));
  for (std::size_t i = 0; i < m.num_vertices(); ++i)
    m.colors[i] = {0.5 + 0.4 * m.vertices[i][0], 0.3, 1.0 - std::abs(m.vertices[i][2])};
  const auto dp = meshfield::testing::random_tensor({m.num_vertices(), 3}, 8, -0.05, 0.05, false);
  const auto s = apply_offsets(m, ag::Tensor::zeros({m.num_vertices(), 3}), dp);
  const auto baked = s.bake();
  for (const char* name : {"r.obj", "r.ply"}) {
    save_mesh(s, dir / name);
    const auto back = load_mesh(dir / name);
    ASSERT_EQ(back.num_vertices(), baked.num_vertices());
    EXPECT_EQ(back.faces, baked.faces);
    for (std::size_t i = 0; i < back.num_vertices(); ++i)
      for (int k = 0; k < 3; ++k) {
        EXPECT_NEAR(back.vertices[i][k], baked.vertices[i][k], 1e-6);
        EXPECT_NEAR(back.colors[i][k], baked.colors[i][k], 1.0 / 255.0);
      }
  }
}

TEST(SaveMesh, PlyColorOneIsByte255) {
  TempDir dir;
  auto m = triangle();
  m.colors[0] = {1.0, 0.0, 0.5};
  save_mesh(m, dir / "c.ply", MeshFormat::ply);
  const auto text = read_file(dir / "c.ply");
  const auto body = text.substr(text.find("end_header\n") + 11);
  // Vertex record: 3 floats then 3 bytes.
  EXPECT_EQ(static_cast<unsigned char>(body[12]), 255);
  EXPECT_EQ(static_cast<unsigned char>(body[13]), 0);
  EXPECT_EQ(static_cast<unsigned char>(body[14]), 128);
}
