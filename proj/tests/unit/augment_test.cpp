#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "meshfield/errors.hpp"
#include "meshfield/render.hpp"

using namespace meshfield;
using meshfield::testing::random_tensor;

namespace {

std::array<double, 2> apply_h(const std::array<double, 9>& h, double x, double y) {
  const double w = h[6] * x + h[7] * y + h[8];
  return {(h[0] * x + h[1] * y + h[2]) / w, (h[3] * x + h[4] * y + h[5]) / w};
}

}  // namespace

TEST(Homography, MapsCornersOntoTargets) {
  const std::array<std::array<double, 2>, 4> src = {{{0, 0}, {31, 0}, {31, 31}, {0, 31}}};
  const std::array<std::array<double, 2>, 4> dst = {{{2, 3}, {29, 1}, {30, 28}, {4, 30}}};
  const auto h = homography_from_points(src, dst);
  for (int k = 0; k < 4; ++k) {
    const auto p = apply_h(h, src[k][0], src[k][1]);
    EXPECT_NEAR(p[0], dst[k][0], 1e-9);
    EXPECT_NEAR(p[1], dst[k][1], 1e-9);
  }
  EXPECT_DOUBLE_EQ(h[8], 1.0);
}

TEST(Homography, IdentityForEqualPoints) {
  const std::array<std::array<double, 2>, 4> pts = {{{0, 0}, {10, 0}, {10, 10}, {0, 10}}};
  const auto h = homography_from_points(pts, pts);
  const std::array<double, 9> id = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(h[i], id[i], 1e-12);
}

TEST(Warp, IdentityReproducesImage) {
  const auto img = random_tensor({12, 12, 3}, 1, 0, 1, false);
  const auto out = warp_image(img, identity_warp(12, 12), 12, 0.5);
  for (std::size_t i = 0; i < img.numel(); ++i) EXPECT_NEAR(out.data()[i], img.data()[i], 1e-12);
}

TEST(Warp, HalvingAveragesPixelPairs) {
  const auto img = random_tensor({8, 8, 3}, 2, 0, 1, false);
  const auto out = warp_image(img, identity_warp(8, 8), 4, 0.5);
  // Output pixel u samples input coordinate 2u + 0.5, halfway between 2u and 2u+1.
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t c = 0; c < 3; ++c) {
        double expect = 0.0;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) expect += img.data()[((2 * i + di) * 8 + 2 * j + dj) * 3 + c];
        EXPECT_NEAR(out.data()[(i * 4 + j) * 3 + c], expect / 4.0, 1e-12);
      }
}

TEST(Warp, OutsideSamplesUseFill) {
  const auto img = ag::Tensor::full({8, 8, 3}, 1.0);
  WarpParams p = identity_warp(8, 8);
  p.homography = {1, 0, 100, 0, 1, 0, 0, 0, 1};
  const auto out = warp_image(img, p, 8, 0.25);
  for (double v : out.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Warp, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  const auto params = sample_warp(rng, 10, 10, AugmentConfig{.perspective_prob = 1.0});
  auto img = random_tensor({10, 10, 3}, 5, 0, 1);
  const auto w = random_tensor({7, 7, 3}, 6, -1, 1, false);
  auto loss = [&](const std::vector<ag::Tensor>& in) { return ag::sum(warp_image(in[0], params, 7, 0.5) * w); };
  EXPECT_LE(meshfield::testing::grad_check(loss, {img}).max_rel_error, 1e-6);
}

TEST(Warp, RejectsBadShapes) {
  EXPECT_THROW(warp_image(ag::Tensor::zeros({4, 4}), identity_warp(4, 4), 4, 0.5), DimensionError);
  EXPECT_THROW(warp_image(ag::Tensor::zeros({4, 4, 3}), identity_warp(4, 4), 0, 0.5), ContractError);
}

TEST(SampleWarp, CropWithinBoundsAndSeeded) {
  std::mt19937_64 a(9), b(9);
  AugmentConfig cfg;
  for (int k = 0; k < 200; ++k) {
    const auto p = sample_warp(a, 64, 64, cfg);
    const auto q = sample_warp(b, 64, 64, cfg);
    EXPECT_EQ(p.homography, q.homography);
    EXPECT_EQ(p.crop_x, q.crop_x);
    EXPECT_GE(p.crop_x, 0.0);
    EXPECT_GE(p.crop_y, 0.0);
    EXPECT_LE(p.crop_x + p.crop_w, 64.0 + 1e-9);
    EXPECT_LE(p.crop_y + p.crop_h, 64.0 + 1e-9);
    const double area = p.crop_w * p.crop_h / (64.0 * 64.0);
    EXPECT_LE(area, 1.0 + 1e-9);
    EXPECT_GT(area, 0.0);
  }
}

TEST(SampleWarp, DisabledPerspectiveKeepsIdentityHomography) {
  std::mt19937_64 rng(1);
  AugmentConfig cfg;
  cfg.perspective_prob = 0.0;
  const auto p = sample_warp(rng, 32, 32, cfg);
  EXPECT_EQ(p.homography, (std::array<double, 9>{1, 0, 0, 0, 1, 0, 0, 0, 1}));
}

TEST(SampleWarp, CornersStayWithinDistortionBox) {
  std::mt19937_64 rng(2);
  AugmentConfig cfg;
  cfg.perspective_prob = 1.0;
  for (int k = 0; k < 50; ++k) {
    const auto p = sample_warp(rng, 40, 40, cfg);
    for (auto [x, y] : {std::pair{0.0, 0.0}, std::pair{39.0, 0.0}, std::pair{39.0, 39.0}, std::pair{0.0, 39.0}}) {
      // The homography maps output to input, so its inverse moves each corner inward.
      const Eigen::Matrix<double, 3, 3, Eigen::RowMajor> m(p.homography.data());
      const Eigen::Matrix3d inv = m.inverse();
      std::array<double, 9> hinv;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) hinv[3 * r + c] = inv(r, c);
      const auto q = apply_h(hinv, x, y);
      EXPECT_LE(std::abs(q[0] - x), 0.3 * 20 + 1e-6);
      EXPECT_LE(std::abs(q[1] - y), 0.3 * 20 + 1e-6);
    }
  }
}

TEST(Augment, OutputSizeAndRange) {
  std::mt19937_64 rng(3);
  const auto img = random_tensor({32, 32, 3}, 1, 0, 1, false);
  const auto out = augment(img, rng, 24);
  EXPECT_EQ(out.shape(), (ag::Shape{24, 24, 3}));
  for (double v : out.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}
