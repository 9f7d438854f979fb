#pragma once

// Differentiable soft rasterization and 2D augmentation.
//
// Screen space is normalized device coordinates: x and y in [-1, 1], +y up,
// pixel centers at ((j + 0.5) / W * 2 - 1, 1 - (i + 0.5) / H * 2). The soft
// coverage of a face at a pixel is sigmoid(sign(d) d^2 / sigma^2), where d is
// the signed NDC distance to the face boundary (positive inside). Overlapping
// faces are blended with a softmax over normalized inverse depth, and the
// result is alpha-composited over the background.

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "meshfield/autograd.hpp"
#include "meshfield/mesh.hpp"

namespace meshfield {

/// Orbit camera looking at the origin with +Y up. Azimuth 0, elevation 0 sits on +Z.
struct Camera {
  double azimuth = 0.0;    // degrees
  double elevation = 0.0;  // degrees
  double radius = 2.5;
  double fov = 60.0;  // vertical field of view, degrees
  std::size_t image_size = 64;

  Vec3 eye() const;
};

enum class ShadingNormals { vertex, face };

struct RenderSettings {
  double sigma_soft = 1e-4;
  double depth_gamma = 1e-4;
  double ambient = 0.5;
  double diffuse = 0.7;
  /// Direction towards the light in camera space (right, up, towards the viewer).
  Vec3 light_dir{0.57735026918962573, 0.57735026918962573, 0.57735026918962573};
  double background = kGray;
  ShadingNormals normals = ShadingNormals::vertex;
};

struct RenderedView {
  ag::Tensor image;  // H x W x 3
  ag::Tensor alpha;  // H x W, not differentiable
  Camera camera;
};

/// Shades the effective colors and rasterizes one view.
RenderedView render(const StylizedMesh& mesh, const Camera& camera, const RenderSettings& settings = {});
std::vector<RenderedView> render_views(const StylizedMesh& mesh, std::span<const Camera> cameras,
                                       const RenderSettings& settings = {});

/// Rasterizes already-shaded per-corner colors ((3M) x 3, rows in face-corner order).
RenderedView rasterize(const ag::Tensor& positions, const std::vector<Face>& faces, const ag::Tensor& corner_colors,
                       const Camera& camera, const RenderSettings& settings);

/// Per-vertex (or per-face, replicated to corners) Lambertian shaded corner colors.
ag::Tensor shade_corners(const ag::Tensor& positions, const ag::Tensor& colors, const std::vector<Face>& faces,
                         const Camera& camera, const RenderSettings& settings);

/// Azimuth ~ U[0, 360), elevation ~ N(0, 15) clamped to [-45, 45].
std::vector<Camera> sample_train_cameras(std::mt19937_64& rng, std::size_t n, std::size_t image_size = 64);

/// The fixed 24-view evaluation set: azimuths 0..315 step 45 (outer) x elevations -30, 0, 30 (inner).
std::vector<Camera> evaluation_cameras(std::size_t image_size = 224);
/// FNV-1a digest of the camera angles, radius and fov (16 hex digits).
std::string camera_set_hash(std::span<const Camera> cameras);

// ---------------------------------------------------------------------------
// Augmentation.

struct AugmentConfig {
  double distortion_scale = 0.3;
  double perspective_prob = 0.5;
  double crop_scale_min = 0.5;
  double crop_scale_max = 1.0;
  double ratio_min = 3.0 / 4.0;
  double ratio_max = 4.0 / 3.0;
  double fill = kGray;
};

/// A perspective warp followed by a crop, both in input pixel coordinates.
struct WarpParams {
  /// Row-major 3x3 map from perspective-output pixel coordinates to input pixel coordinates.
  std::array<double, 9> homography{1, 0, 0, 0, 1, 0, 0, 0, 1};
  double crop_x = 0.0, crop_y = 0.0, crop_w = 0.0, crop_h = 0.0;
};

WarpParams identity_warp(std::size_t height, std::size_t width);
WarpParams sample_warp(std::mt19937_64& rng, std::size_t height, std::size_t width, const AugmentConfig& config);
/// Homography taking four source points onto four destination points.
std::array<double, 9> homography_from_points(std::span<const std::array<double, 2>, 4> src,
                                             std::span<const std::array<double, 2>, 4> dst);

/// Bilinear resampling of an H x W x 3 image through `params` into out_size x out_size.
ag::Tensor warp_image(const ag::Tensor& image, const WarpParams& params, std::size_t out_size, double fill);
ag::Tensor augment(const ag::Tensor& image, std::mt19937_64& rng, std::size_t out_size, const AugmentConfig& config = {});

// ---------------------------------------------------------------------------
// PNG (8-bit RGB).

void write_png(const ag::Tensor& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const ag::Tensor& image);
ag::Tensor decode_png(std::span<const std::uint8_t> bytes);
ag::Tensor read_png(const std::filesystem::path& path);

}  // namespace meshfield
