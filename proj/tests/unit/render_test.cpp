#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "gradcheck.hpp"
#include "meshfield/bench.hpp"
#include "meshfield/errors.hpp"
#include "meshfield/render.hpp"
#include "temp_dir.hpp"

using namespace meshfield;
using meshfield::testing::GradCheckOptions;
using meshfield::testing::random_tensor;
using meshfield::testing::TempDir;

namespace {

// Triangle in the z = 0 plane facing the default camera.
Mesh front_triangle(double color) {
  Mesh m;
  m.vertices = {{-0.4, -0.3, 0}, {0.4, -0.3, 0}, {0.0, 0.4, 0}};
  m.faces = {{0, 1, 2}};
  m.colors.assign(3, {color, color, color});
  return m;
}

Mesh two_triangles() {
  Mesh m;
  m.vertices = {{-0.4, -0.4, 0.05}, {0.4, -0.4, -0.05}, {0.4, 0.4, 0.0}, {-0.4, 0.4, 0.1}};
  m.faces = {{0, 1, 2}, {0, 2, 3}};
  m.colors = {{0.2, 0.4, 0.6}, {0.8, 0.1, 0.3}, {0.5, 0.9, 0.2}, {0.3, 0.3, 0.7}};
  return m;
}

RenderSettings unlit() {
  RenderSettings s;
  s.ambient = 1.0;
  s.diffuse = 0.0;
  return s;
}

// Signed distance (positive inside) from (x, y) to the triangle in the plane.
double signed_distance(const Mesh& m, double x, double y) {
  double best = 1e300;
  bool inside = true;
  for (int e = 0; e < 3; ++e) {
    const auto& a = m.vertices[e];
    const auto& b = m.vertices[(e + 1) % 3];
    const double ex = b[0] - a[0], ey = b[1] - a[1];
    const double cross = ex * (y - a[1]) - ey * (x - a[0]);
    if (cross < 0) inside = false;
    double t = ((x - a[0]) * ex + (y - a[1]) * ey) / (ex * ex + ey * ey);
    t = std::clamp(t, 0.0, 1.0);
    const double dx = a[0] + t * ex - x, dy = a[1] + t * ey - y;
    best = std::min(best, std::sqrt(dx * dx + dy * dy));
  }
  return inside ? best : -best;
}

}  // namespace

TEST(Camera, EyePositions) {
  Camera c;
  auto e = c.eye();
  EXPECT_NEAR(e[0], 0.0, 1e-12);
  EXPECT_NEAR(e[1], 0.0, 1e-12);
  EXPECT_NEAR(e[2], 2.5, 1e-12);
  c.azimuth = 90;
  e = c.eye();
  EXPECT_NEAR(e[0], 2.5, 1e-12);
  EXPECT_NEAR(e[2], 0.0, 1e-12);
  c.elevation = 30;
  e = c.eye();
  EXPECT_NEAR(e[1], 2.5 * 0.5, 1e-12);
  EXPECT_NEAR(std::sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]), 2.5, 1e-12);
}

TEST(Cameras, EvaluationSetLayout) {
  const auto cams = evaluation_cameras(32);
  ASSERT_EQ(cams.size(), 24u);
  const double elevations[3] = {-30, 0, 30};
  for (std::size_t i = 0; i < 24; ++i) {
    EXPECT_EQ(cams[i].azimuth, 45.0 * static_cast<double>(i / 3));
    EXPECT_EQ(cams[i].elevation, elevations[i % 3]);
    EXPECT_EQ(cams[i].image_size, 32u);
  }
}

TEST(Cameras, HashIsStableAndSensitive) {
  const auto a = evaluation_cameras();
  const auto h = camera_set_hash(a);
  EXPECT_EQ(h.size(), 16u);
  EXPECT_EQ(h, camera_set_hash(evaluation_cameras(64)));
  auto b = a;
  b[5].elevation += 1e-3;
  EXPECT_NE(h, camera_set_hash(b));
}

TEST(Cameras, TrainingSamplesInRangeAndSeeded) {
  std::mt19937_64 r1(3), r2(3);
  const auto a = sample_train_cameras(r1, 500);
  const auto b = sample_train_cameras(r2, 500);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_GE(a[i].azimuth, 0.0);
    EXPECT_LT(a[i].azimuth, 360.0);
    EXPECT_GE(a[i].elevation, -45.0);
    EXPECT_LE(a[i].elevation, 45.0);
    EXPECT_EQ(a[i].azimuth, b[i].azimuth);
    EXPECT_EQ(a[i].elevation, b[i].elevation);
    sum += a[i].elevation;
  }
  EXPECT_NEAR(sum / 500.0, 0.0, 3.0);
}

TEST(Render, CoverageMatchesGeometricOracle) {
  const auto mesh = front_triangle(0.9);
  Camera cam;
  cam.image_size = 48;
  const auto view = render(unstyled(mesh), cam, unlit());
  const double tan_half = std::tan(30.0 * M_PI / 180.0);
  const double pixel_world = 2.0 / 48.0 * 2.5 * tan_half;
  for (std::size_t i = 0; i < 48; ++i) {
    for (std::size_t j = 0; j < 48; ++j) {
      const double px = (j + 0.5) / 48.0 * 2.0 - 1.0, py = 1.0 - (i + 0.5) / 48.0 * 2.0;
      const double d = signed_distance(mesh, px * 2.5 * tan_half, py * 2.5 * tan_half);
      const double a = view.alpha.data()[i * 48 + j];
      const double* rgb = view.image.data().data() + 3 * (i * 48 + j);
      if (d > 0.25 * pixel_world) {
        EXPECT_NEAR(a, 1.0, 1e-9);
        EXPECT_NEAR(rgb[0], 0.9, 1e-9);
      } else if (d < -0.25 * pixel_world) {
        EXPECT_LT(a, 1e-9);
        EXPECT_NEAR(rgb[1], kGray, 1e-9);
      }
    }
  }
}

TEST(Render, AlphaVanishesFiveSigmaOutside) {
  RenderSettings s = unlit();
  s.sigma_soft = 1e-2;
  Camera cam;
  cam.image_size = 64;
  const auto mesh = front_triangle(0.9);
  const auto view = render(unstyled(mesh), cam, s);
  const double tan_half = std::tan(30.0 * M_PI / 180.0);
  for (std::size_t i = 0; i < 64; ++i)
    for (std::size_t j = 0; j < 64; ++j) {
      const double px = (j + 0.5) / 32.0 - 1.0, py = 1.0 - (i + 0.5) / 32.0;
      // NDC distance is world distance scaled by 1 / (depth * tan_half).
      const double d = signed_distance(mesh, px * 2.5 * tan_half, py * 2.5 * tan_half) / (2.5 * tan_half);
      if (d < -5.0 * s.sigma_soft) EXPECT_LT(view.alpha.data()[i * 64 + j], 1e-10);
    }
}

TEST(Render, NearerFaceWins) {
  Mesh m;
  m.vertices = {{-0.5, -0.5, 0.2}, {0.5, -0.5, 0.2}, {0, 0.5, 0.2}, {-0.5, -0.5, -0.2}, {0.5, -0.5, -0.2}, {0, 0.5, -0.2}};
  m.faces = {{3, 4, 5}, {0, 1, 2}};
  m.colors = {{1, 0, 0}, {1, 0, 0}, {1, 0, 0}, {0, 0, 1}, {0, 0, 1}, {0, 0, 1}};
  Camera cam;
  cam.image_size = 16;
  const auto view = render(unstyled(m), cam, unlit());
  const double* center = view.image.data().data() + 3 * (8 * 16 + 8);
  EXPECT_GT(center[0], 0.99);
  EXPECT_LT(center[2], 0.01);
}

TEST(Render, LambertShadingOfFacingTriangle) {
  RenderSettings s;
  s.light_dir = {0, 0, 1};
  s.ambient = 0.2;
  s.diffuse = 0.5;
  Camera cam;
  cam.image_size = 16;
  const auto view = render(unstyled(front_triangle(0.8)), cam, s);
  const double* c = view.image.data().data() + 3 * (8 * 16 + 8);
  EXPECT_NEAR(c[0], 0.8 * (0.2 + 0.5), 1e-9);
}

TEST(Render, GrayVariantIsUniformGray) {
  auto m = front_triangle(0.1);
  Camera cam;
  cam.image_size = 16;
  const auto view = render(gray_variant(unstyled(m)), cam, unlit());
  for (double v : view.image.data()) EXPECT_NEAR(v, kGray, 1e-12);
}

TEST(Render, RejectsEmptyMesh) {
  Mesh m;
  EXPECT_THROW(render(unstyled(m), Camera{}), GeometryError);
}

TEST(Render, GradientsMatchFiniteDifferences) {
  const auto mesh = two_triangles();
  RenderSettings s;
  s.sigma_soft = 1e-2;
  s.depth_gamma = 1e-2;
  Camera cam;
  cam.image_size = 16;
  cam.azimuth = 20;
  cam.elevation = 10;
  auto dc = random_tensor({4, 3}, 1, -0.1, 0.1);
  auto dp = random_tensor({4, 3}, 2, -0.03, 0.03);
  const auto weights = random_tensor({16, 16, 3}, 3, 0.0, 1.0, false);
  auto loss = [&](const std::vector<ag::Tensor>& in) {
    const auto view = render(apply_offsets(mesh, in[0], in[1]), cam, s);
    return ag::sum(view.image * weights);
  };
  GradCheckOptions opt;
  opt.step = 1e-6;
  const auto r = meshfield::testing::grad_check(loss, {dc, dp}, opt);
  EXPECT_LE(r.max_rel_error, 1e-2);
}

TEST(Render, RenderIsDeterministic) {
  const auto mesh = normalize_and_init(make_icosphere(2));
  Camera cam;
  cam.image_size = 32;
  EXPECT_EQ(render(unstyled(mesh), cam).image.to_vector(), render(unstyled(mesh), cam).image.to_vector());
}

TEST(Png, RoundTripQuantizes) {
  TempDir dir;
  std::vector<double> v(4 * 5 * 3);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i % 7) / 6.0;
  const auto img = ag::Tensor::from_vector({4, 5, 3}, v);
  write_png(img, dir / "x.png");
  const auto back = read_png(dir / "x.png");
  ASSERT_EQ(back.shape(), img.shape());
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(back.data()[i], v[i], 0.5 / 255.0 + 1e-12);
  const auto bytes = encode_png(img);
  EXPECT_EQ(decode_png(bytes).to_vector(), back.to_vector());
}

TEST(Png, RejectsGarbage) {
  const std::vector<std::uint8_t> junk = {1, 2, 3, 4, 5};
  EXPECT_ANY_THROW(decode_png(junk));
  EXPECT_THROW(encode_png(ag::Tensor::zeros({4, 4})), DimensionError);
}
