#include <Eigen/Dense>
#include <cmath>

#include "meshfield/errors.hpp"
#include "meshfield/render.hpp"

namespace meshfield {

WarpParams identity_warp(std::size_t height, std::size_t width) {
  WarpParams p;
  p.crop_w = static_cast<double>(width);
  p.crop_h = static_cast<double>(height);
  return p;
}

std::array<double, 9> homography_from_points(std::span<const std::array<double, 2>, 4> src,
                                             std::span<const std::array<double, 2>, 4> dst) {
  Eigen::Matrix<double, 8, 8> A;
  Eigen::Matrix<double, 8, 1> rhs;
  for (int k = 0; k < 4; ++k) {
    const double x = src[k][0], y = src[k][1], u = dst[k][0], v = dst[k][1];
    A.row(2 * k) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    A.row(2 * k + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    rhs(2 * k) = u;
    rhs(2 * k + 1) = v;
  }
  Eigen::Matrix<double, 8, 1> h = A.fullPivLu().solve(rhs);
  return {h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0};
}

WarpParams sample_warp(std::mt19937_64& rng, std::size_t height, std::size_t width, const AugmentConfig& config) {
  const double w = static_cast<double>(width), h = static_cast<double>(height);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  WarpParams p = identity_warp(height, width);

  if (unit(rng) < config.perspective_prob && config.distortion_scale > 0.0) {
    const double dx = config.distortion_scale * w / 2.0, dy = config.distortion_scale * h / 2.0;
    const std::array<std::array<double, 2>, 4> start{{{0.0, 0.0}, {w - 1.0, 0.0}, {w - 1.0, h - 1.0}, {0.0, h - 1.0}}};
    std::array<std::array<double, 2>, 4> end;
    end[0] = {dx * unit(rng), dy * unit(rng)};
    end[1] = {w - 1.0 - dx * unit(rng), dy * unit(rng)};
    end[2] = {w - 1.0 - dx * unit(rng), h - 1.0 - dy * unit(rng)};
    end[3] = {dx * unit(rng), h - 1.0 - dy * unit(rng)};
    // Output pixels at the moved corners sample the original corners.
    p.homography = homography_from_points(end, start);
  }

  const double area = w * h;
  std::uniform_real_distribution<double> scale(config.crop_scale_min, config.crop_scale_max);
  std::uniform_real_distribution<double> log_ratio(std::log(config.ratio_min), std::log(config.ratio_max));
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * scale(rng);
    const double ratio = std::exp(log_ratio(rng));
    const double cw = std::sqrt(target * ratio), ch = std::sqrt(target / ratio);
    if (cw <= w && ch <= h) {
      p.crop_x = (w - cw) * unit(rng);
      p.crop_y = (h - ch) * unit(rng);
      p.crop_w = cw;
      p.crop_h = ch;
      break;
    }
  }
  return p;
}

ag::Tensor warp_image(const ag::Tensor& image, const WarpParams& params, std::size_t out_size, double fill) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DimensionError("warp_image: expected H x W x 3, got " + ag::shape_str(image.shape()));
  }
  if (out_size == 0) throw ContractError("warp_image: output size must be positive");
  const long H = static_cast<long>(image.dim(0)), W = static_cast<long>(image.dim(1));
  const auto& Hm = params.homography;
  const std::size_t n = out_size * out_size;

  // Four bilinear taps per output pixel; index -1 marks a tap outside the image.
  struct Tap {
    long index[4];
    double weight[4];
  };
  auto taps = std::make_shared<std::vector<Tap>>(n);
  auto in = image.data();
  std::vector<double> out(n * 3);
  const double scale_x = params.crop_w / static_cast<double>(out_size);
  const double scale_y = params.crop_h / static_cast<double>(out_size);
  for (std::size_t v = 0; v < out_size; ++v)
    for (std::size_t u = 0; u < out_size; ++u) {
      const double xc = params.crop_x + (static_cast<double>(u) + 0.5) * scale_x - 0.5;
      const double yc = params.crop_y + (static_cast<double>(v) + 0.5) * scale_y - 0.5;
      const double den = Hm[6] * xc + Hm[7] * yc + Hm[8];
      const double xi = (Hm[0] * xc + Hm[1] * yc + Hm[2]) / den;
      const double yi = (Hm[3] * xc + Hm[4] * yc + Hm[5]) / den;
      const double fx0 = std::floor(xi), fy0 = std::floor(yi);
      const double fx = xi - fx0, fy = yi - fy0;
      const long x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
      Tap& t = (*taps)[v * out_size + u];
      const long xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const long ys[4] = {y0, y0, y0 + 1, y0 + 1};
      const double ws[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
      for (int k = 0; k < 4; ++k) {
        t.weight[k] = ws[k];
        t.index[k] = (xs[k] >= 0 && xs[k] < W && ys[k] >= 0 && ys[k] < H) ? (ys[k] * W + xs[k]) : -1;
      }
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k)
          acc += t.weight[k] * (t.index[k] >= 0 ? in[static_cast<std::size_t>(t.index[k]) * 3 + c] : fill);
        out[(v * out_size + u) * 3 + c] = acc;
      }
    }
  return ag::make_op(
      {out_size, out_size, 3}, std::move(out), {image},
      [taps](std::span<const double> g, const ag::GradSlots& slots) {
        auto& gi = *slots[0];
        for (std::size_t p = 0; p < taps->size(); ++p) {
          const Tap& t = (*taps)[p];
          for (int k = 0; k < 4; ++k) {
            if (t.index[k] < 0 || t.weight[k] == 0.0) continue;
            for (int c = 0; c < 3; ++c) gi[static_cast<std::size_t>(t.index[k]) * 3 + c] += t.weight[k] * g[p * 3 + c];
          }
        }
      },
      "warp_image");
}

ag::Tensor augment(const ag::Tensor& image, std::mt19937_64& rng, std::size_t out_size, const AugmentConfig& config) {
  if (image.rank() != 3) throw DimensionError("augment: expected H x W x 3, got " + ag::shape_str(image.shape()));
  const auto params = sample_warp(rng, image.dim(0), image.dim(1), config);
  return warp_image(image, params, out_size, config.fill);
}

}  // namespace meshfield
