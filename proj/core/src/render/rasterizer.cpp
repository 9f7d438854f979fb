#include <ceres/jet.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "meshfield/errors.hpp"
#include "meshfield/hash.hpp"
#include "meshfield/render.hpp"

namespace meshfield {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
// Coverage below sigmoid(-kCutoff) is treated as zero.
constexpr double kCutoff = 40.0;

struct CameraFrame {
  Vec3 eye, right, up, forward;
  double tan_half = 1.0;
  double near = 0.5, far = 4.5;
};

Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {v[0] / n, v[1] / n, v[2] / n};
}

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

double value_of(double x) { return x; }
template <int N>
double value_of(const ceres::Jet<double, N>& x) {
  return x.a;
}

CameraFrame make_frame(const Camera& cam) {
  if (!(cam.radius > 0.0) || !(cam.fov > 0.0 && cam.fov < 180.0) || cam.image_size == 0) {
    throw ContractError("camera: radius, fov and image size must be positive (fov < 180)");
  }
  CameraFrame f;
  f.eye = cam.eye();
  f.forward = normalized({-f.eye[0], -f.eye[1], -f.eye[2]});
  Vec3 r = cross(f.forward, {0.0, 1.0, 0.0});
  const double rn = std::sqrt(dot3(r, r));
  f.right = rn > 1e-12 ? Vec3{r[0] / rn, r[1] / rn, r[2] / rn} : Vec3{1.0, 0.0, 0.0};
  f.up = cross(f.right, f.forward);
  f.tan_half = std::tan(cam.fov * kDegToRad / 2.0);
  f.near = std::max(cam.radius - 2.0, 1e-3);
  f.far = cam.radius + 2.0;
  return f;
}

Vec3 to_view(const CameraFrame& f, const Vec3& p) {
  const Vec3 d{p[0] - f.eye[0], p[1] - f.eye[1], p[2] - f.eye[2]};
  return {dot3(f.right, d), dot3(f.up, d), dot3(f.forward, d)};
}

// Screen-space geometry of one pixel against one face, given the three
// vertices in view coordinates (x right, y up, z depth). Produces the signed
// distance to the projected triangle boundary (positive inside), barycentric
// weights of the closest point on the triangle and the interpolated depth.
template <typename T>
bool fragment(const T (&v)[3][3], double px, double py, double tan_half, T& s, T (&b)[3], T& z) {
  using std::sqrt;
  T X[3], Y[3];
  for (int i = 0; i < 3; ++i) {
    X[i] = v[i][0] / (v[i][2] * tan_half);
    Y[i] = v[i][1] / (v[i][2] * tan_half);
  }
  const T area2 = (X[1] - X[0]) * (Y[2] - Y[0]) - (X[2] - X[0]) * (Y[1] - Y[0]);
  if (std::abs(value_of(area2)) < 1e-14) return false;
  T w[3];
  w[0] = ((X[1] - px) * (Y[2] - py) - (X[2] - px) * (Y[1] - py)) / area2;
  w[1] = ((X[2] - px) * (Y[0] - py) - (X[0] - px) * (Y[2] - py)) / area2;
  w[2] = T(1.0) - w[0] - w[1];

  const bool inside = w[0] >= T(0.0) && w[1] >= T(0.0) && w[2] >= T(0.0);
  if (inside) {
    const T abs_area = area2 < T(0.0) ? -area2 : area2;
    bool first = true;
    for (int i = 0; i < 3; ++i) {
      const int a = (i + 1) % 3, c = (i + 2) % 3;
      const T len = sqrt((X[c] - X[a]) * (X[c] - X[a]) + (Y[c] - Y[a]) * (Y[c] - Y[a]));
      const T d = w[i] * abs_area / len;
      if (first || d < s) {
        s = d;
        first = false;
      }
    }
    for (int i = 0; i < 3; ++i) b[i] = w[i];
  } else {
    T best_d2(0.0), best_t(0.0);
    int best_edge = -1;
    for (int e = 0; e < 3; ++e) {
      const int a = (e + 1) % 3, c = (e + 2) % 3;
      const T ex = X[c] - X[a], ey = Y[c] - Y[a];
      const T len2 = ex * ex + ey * ey;
      T t = ((px - X[a]) * ex + (py - Y[a]) * ey) / len2;
      if (t < T(0.0)) t = T(0.0);
      if (t > T(1.0)) t = T(1.0);
      const T qx = X[a] + t * ex - px, qy = Y[a] + t * ey - py;
      const T d2 = qx * qx + qy * qy;
      if (best_edge < 0 || d2 < best_d2) {
        best_d2 = d2;
        best_t = t;
        best_edge = e;
      }
    }
    s = value_of(best_d2) > 1e-300 ? -sqrt(best_d2) : T(0.0);
    const int a = (best_edge + 1) % 3, c = (best_edge + 2) % 3;
    b[best_edge] = T(0.0);
    b[a] = T(1.0) - best_t;
    b[c] = best_t;
  }
  z = b[0] * v[0][2] + b[1] * v[1][2] + b[2] * v[2][2];
  return true;
}

struct Fragment {
  std::uint32_t face;
  double s, coverage, depth_score;
  double bary[3];
};

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct PixelState {
  double alpha = 0.0;
  double sum = 0.0;   // S = sum_j D_j e_j
  double zmax = 0.0;
  std::array<double, 3> blend{0.0, 0.0, 0.0};  // A
};

}  // namespace

Vec3 Camera::eye() const {
  const double az = azimuth * kDegToRad, el = elevation * kDegToRad;
  return {radius * std::cos(el) * std::sin(az), radius * std::sin(el), radius * std::cos(el) * std::cos(az)};
}

RenderedView rasterize(const ag::Tensor& positions, const std::vector<Face>& faces, const ag::Tensor& corner_colors,
                       const Camera& camera, const RenderSettings& settings) {
  if (positions.rank() != 2 || positions.dim(1) != 3) {
    throw DimensionError("rasterize: positions must be N x 3, got " + ag::shape_str(positions.shape()));
  }
  if (positions.dim(0) == 0 || faces.empty()) throw GeometryError("rasterize: empty mesh");
  if (corner_colors.shape() != ag::Shape{3 * faces.size(), 3}) {
    throw DimensionError("rasterize: corner colors must be " + std::to_string(3 * faces.size()) + " x 3, got " +
                         ag::shape_str(corner_colors.shape()));
  }
  const auto frame = make_frame(camera);
  const std::size_t H = camera.image_size, W = camera.image_size;
  const double sigma = settings.sigma_soft;
  const double gamma = settings.depth_gamma;
  const double radius_cut = sigma * std::sqrt(kCutoff);
  const double depth_range = frame.far - frame.near;
  const double bg = settings.background;

  auto pos = positions.data();
  std::vector<Vec3> view(positions.dim(0));
  for (std::size_t i = 0; i < view.size(); ++i) view[i] = to_view(frame, {pos[3 * i], pos[3 * i + 1], pos[3 * i + 2]});

  auto frags = std::make_shared<std::vector<std::vector<Fragment>>>(H * W);
  for (std::uint32_t fi = 0; fi < faces.size(); ++fi) {
    const auto& f = faces[fi];
    double v[3][3];
    bool behind = false;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (int k = 0; k < 3; ++k) {
      if (f[k] >= view.size()) throw GeometryError("rasterize: face index out of range");
      for (int c = 0; c < 3; ++c) v[k][c] = view[f[k]][c];
      if (v[k][2] <= 1e-6) behind = true;
      const double X = v[k][0] / (v[k][2] * frame.tan_half), Y = v[k][1] / (v[k][2] * frame.tan_half);
      xmin = std::min(xmin, X);
      xmax = std::max(xmax, X);
      ymin = std::min(ymin, Y);
      ymax = std::max(ymax, Y);
    }
    if (behind) continue;
    xmin = std::max(xmin - radius_cut, -2.0);
    xmax = std::min(xmax + radius_cut, 2.0);
    ymin = std::max(ymin - radius_cut, -2.0);
    ymax = std::min(ymax + radius_cut, 2.0);
    const double wd = static_cast<double>(W), hd = static_cast<double>(H);
    const auto j0 = static_cast<long>(std::ceil((xmin + 1.0) * wd / 2.0 - 0.5));
    const auto j1 = static_cast<long>(std::floor((xmax + 1.0) * wd / 2.0 - 0.5));
    const auto i0 = static_cast<long>(std::ceil((1.0 - ymax) * hd / 2.0 - 0.5));
    const auto i1 = static_cast<long>(std::floor((1.0 - ymin) * hd / 2.0 - 0.5));
    for (long i = std::max(i0, 0L); i <= std::min(i1, static_cast<long>(H) - 1); ++i) {
      const double py = 1.0 - (static_cast<double>(i) + 0.5) / hd * 2.0;
      for (long j = std::max(j0, 0L); j <= std::min(j1, static_cast<long>(W) - 1); ++j) {
        const double px = (static_cast<double>(j) + 0.5) / wd * 2.0 - 1.0;
        double s, b[3], z;
        if (!fragment(v, px, py, frame.tan_half, s, b, z)) continue;
        if (s < -radius_cut) continue;
        const double u = (s >= 0.0 ? 1.0 : -1.0) * s * s / (sigma * sigma);
        Fragment fr{fi, s, sigmoid(u), (frame.far - z) / depth_range, {b[0], b[1], b[2]}};
        (*frags)[static_cast<std::size_t>(i) * W + static_cast<std::size_t>(j)].push_back(fr);
      }
    }
  }

  auto cc = corner_colors.data();
  std::vector<double> image(H * W * 3);
  std::vector<double> alpha(H * W);
  auto states = std::make_shared<std::vector<PixelState>>(H * W);
  for (std::size_t p = 0; p < H * W; ++p) {
    const auto& list = (*frags)[p];
    auto& st = (*states)[p];
    if (list.empty()) {
      for (int c = 0; c < 3; ++c) image[3 * p + c] = bg;
      continue;
    }
    double zmax = -1e300, keep = 1.0;
    for (const auto& fr : list) {
      zmax = std::max(zmax, fr.depth_score);
      keep *= 1.0 - fr.coverage;
    }
    st.zmax = zmax;
    st.alpha = 1.0 - keep;
    for (const auto& fr : list) {
      const double we = fr.coverage * std::exp((fr.depth_score - zmax) / gamma);
      st.sum += we;
      for (int c = 0; c < 3; ++c) {
        double col = 0.0;
        for (int k = 0; k < 3; ++k) col += fr.bary[k] * cc[(3 * fr.face + k) * 3 + c];
        st.blend[c] += we * col;
      }
    }
    if (st.sum > 0.0)
      for (auto& v : st.blend) v /= st.sum;
    for (int c = 0; c < 3; ++c) image[3 * p + c] = st.alpha * st.blend[c] + (1.0 - st.alpha) * bg;
    alpha[p] = st.alpha;
  }

  RenderedView out;
  out.camera = camera;
  out.alpha = ag::Tensor::from_vector({H, W}, std::move(alpha));

  const bool keep_graph = ag::grad_enabled() && (positions.requires_grad() || corner_colors.requires_grad());
  if (!keep_graph) {
    out.image = ag::Tensor::from_vector({H, W, 3}, std::move(image));
    return out;
  }

  out.image = ag::make_op(
      {H, W, 3}, std::move(image), {positions, corner_colors},
      [frags, states, frame, faces, positions, corner_colors, sigma, gamma, depth_range, bg, H, W](
          std::span<const double> g, const ag::GradSlots& slots) {
        using Jet = ceres::Jet<double, 9>;
        auto cc = corner_colors.data();
        auto pos = positions.data();
        for (std::size_t p = 0; p < H * W; ++p) {
          const auto& list = (*frags)[p];
          if (list.empty()) continue;
          const double gp[3] = {g[3 * p], g[3 * p + 1], g[3 * p + 2]};
          if (gp[0] == 0.0 && gp[1] == 0.0 && gp[2] == 0.0) continue;
          const auto& st = (*states)[p];
          const double g_alpha = gp[0] * (st.blend[0] - bg) + gp[1] * (st.blend[1] - bg) + gp[2] * (st.blend[2] - bg);
          const double gA[3] = {st.alpha * gp[0], st.alpha * gp[1], st.alpha * gp[2]};

          // Product of (1 - D_k) over all k != j via prefix / suffix products.
          const std::size_t n = list.size();
          std::vector<double> prefix(n + 1, 1.0), suffix(n + 1, 1.0);
          for (std::size_t j = 0; j < n; ++j) prefix[j + 1] = prefix[j] * (1.0 - list[j].coverage);
          for (std::size_t j = n; j-- > 0;) suffix[j] = suffix[j + 1] * (1.0 - list[j].coverage);

          for (std::size_t j = 0; j < n; ++j) {
            const auto& fr = list[j];
            const double e = std::exp((fr.depth_score - st.zmax) / gamma);
            const double w = st.sum > 0.0 ? fr.coverage * e / st.sum : 0.0;
            double col[3] = {0.0, 0.0, 0.0};
            for (int c = 0; c < 3; ++c)
              for (int k = 0; k < 3; ++k) col[c] += fr.bary[k] * cc[(3 * fr.face + k) * 3 + c];

            if (slots[1]) {
              auto& gc = *slots[1];
              for (int k = 0; k < 3; ++k)
                for (int c = 0; c < 3; ++c) gc[(3 * fr.face + k) * 3 + c] += fr.bary[k] * w * gA[c];
            }
            if (!slots[0]) continue;

            double g_dev = 0.0;  // gA . (c_j - A)
            for (int c = 0; c < 3; ++c) g_dev += gA[c] * (col[c] - st.blend[c]);
            const double g_cov = g_alpha * prefix[j] * suffix[j + 1] + (st.sum > 0.0 ? g_dev * e / st.sum : 0.0);
            const double g_depth_score = g_dev * w / gamma;
            const double g_z = -g_depth_score / depth_range;
            const double g_s = g_cov * fr.coverage * (1.0 - fr.coverage) * 2.0 * std::abs(fr.s) / (sigma * sigma);
            double g_b[3];
            for (int k = 0; k < 3; ++k) {
              g_b[k] = 0.0;
              for (int c = 0; c < 3; ++c) g_b[k] += w * gA[c] * cc[(3 * fr.face + k) * 3 + c];
            }
            if (g_s == 0.0 && g_z == 0.0 && g_b[0] == 0.0 && g_b[1] == 0.0 && g_b[2] == 0.0) continue;

            const auto& f = faces[fr.face];
            Jet v[3][3];
            for (int k = 0; k < 3; ++k) {
              const Vec3 vv = to_view(frame, {pos[3 * f[k]], pos[3 * f[k] + 1], pos[3 * f[k] + 2]});
              for (int c = 0; c < 3; ++c) v[k][c] = Jet(vv[c], 3 * k + c);
            }
            const double py = 1.0 - (static_cast<double>(p / W) + 0.5) / static_cast<double>(H) * 2.0;
            const double px = (static_cast<double>(p % W) + 0.5) / static_cast<double>(W) * 2.0 - 1.0;
            Jet s, b[3], z;
            if (!fragment(v, px, py, frame.tan_half, s, b, z)) continue;
            auto& gpos = *slots[0];
            for (int k = 0; k < 3; ++k) {
              Vec3 gview;
              for (int c = 0; c < 3; ++c) {
                const int idx = 3 * k + c;
                gview[c] = g_s * s.v[idx] + g_z * z.v[idx] + g_b[0] * b[0].v[idx] + g_b[1] * b[1].v[idx] +
                           g_b[2] * b[2].v[idx];
              }
              // view = R (p - eye), so dL/dp = R^T dL/dview.
              for (int c = 0; c < 3; ++c)
                gpos[3 * f[k] + c] +=
                    frame.right[c] * gview[0] + frame.up[c] * gview[1] + frame.forward[c] * gview[2];
            }
          }
        }
      },
      "rasterize");
  return out;
}

ag::Tensor shade_corners(const ag::Tensor& positions, const ag::Tensor& colors, const std::vector<Face>& faces,
                         const Camera& camera, const RenderSettings& settings) {
  const auto frame = make_frame(camera);
  const Vec3& l = settings.light_dir;
  // Camera-space light (right, up, towards viewer) expressed in world space.
  Vec3 lw;
  for (int c = 0; c < 3; ++c) lw[c] = frame.right[c] * l[0] + frame.up[c] * l[1] - frame.forward[c] * l[2];
  const auto light = ag::Tensor::from_vector({3, 1}, {lw[0], lw[1], lw[2]});

  std::vector<std::size_t> corners;
  corners.reserve(faces.size() * 3);
  for (const auto& f : faces) corners.insert(corners.end(), f.begin(), f.end());

  const bool unlit = settings.diffuse == 0.0;
  if (settings.normals == ShadingNormals::vertex) {
    ag::Tensor shaded = colors;
    if (unlit) {
      shaded = colors * settings.ambient;
    } else {
      auto lambert = ag::relu(ag::matmul(vertex_normals(positions, faces), light));
      auto shade = ag::clamp(lambert * settings.diffuse + settings.ambient, -1e300, 1.0);
      shaded = colors * shade;
    }
    return ag::gather_rows(shaded, corners);
  }
  auto corner_colors = ag::gather_rows(colors, corners);
  if (unlit) return corner_colors * settings.ambient;
  auto lambert = ag::relu(ag::matmul(face_normals(positions, faces), light));
  auto shade = ag::clamp(lambert * settings.diffuse + settings.ambient, -1e300, 1.0);
  std::vector<std::size_t> face_of_corner(faces.size() * 3);
  for (std::size_t i = 0; i < face_of_corner.size(); ++i) face_of_corner[i] = i / 3;
  return corner_colors * ag::gather_rows(shade, face_of_corner);
}

RenderedView render(const StylizedMesh& mesh, const Camera& camera, const RenderSettings& settings) {
  if (mesh.base.num_vertices() == 0 || mesh.base.num_faces() == 0) throw GeometryError("render: empty mesh");
  auto positions = mesh.effective_positions();
  auto colors = mesh.effective_colors();
  auto corners = shade_corners(positions, colors, mesh.base.faces, camera, settings);
  return rasterize(positions, mesh.base.faces, corners, camera, settings);
}

std::vector<RenderedView> render_views(const StylizedMesh& mesh, std::span<const Camera> cameras,
                                       const RenderSettings& settings) {
  if (cameras.empty()) throw ContractError("render_views: empty camera list");
  if (mesh.base.num_vertices() == 0 || mesh.base.num_faces() == 0) throw GeometryError("render: empty mesh");
  auto positions = mesh.effective_positions();
  auto colors = mesh.effective_colors();
  std::vector<RenderedView> out;
  out.reserve(cameras.size());
  for (const auto& cam : cameras) {
    auto corners = shade_corners(positions, colors, mesh.base.faces, cam, settings);
    out.push_back(rasterize(positions, mesh.base.faces, corners, cam, settings));
  }
  return out;
}

std::vector<Camera> sample_train_cameras(std::mt19937_64& rng, std::size_t n, std::size_t image_size) {
  if (n == 0) throw ContractError("sample_train_cameras: need at least one camera");
  std::uniform_real_distribution<double> azimuth(0.0, 360.0);
  std::normal_distribution<double> elevation(0.0, 15.0);
  std::vector<Camera> out(n);
  for (auto& cam : out) {
    cam.azimuth = azimuth(rng);
    cam.elevation = std::clamp(elevation(rng), -45.0, 45.0);
    cam.image_size = image_size;
  }
  return out;
}

std::vector<Camera> evaluation_cameras(std::size_t image_size) {
  std::vector<Camera> out;
  for (int a = 0; a < 8; ++a)
    for (double e : {-30.0, 0.0, 30.0}) {
      Camera cam;
      cam.azimuth = 45.0 * a;
      cam.elevation = e;
      cam.image_size = image_size;
      out.push_back(cam);
    }
  return out;
}

std::string camera_set_hash(std::span<const Camera> cameras) {
  std::uint64_t h = fnv1a("");
  char buf[128];
  for (const auto& c : cameras) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f;", c.azimuth, c.elevation, c.radius, c.fov);
    h = fnv1a(buf, h);
  }
  return hex64(h);
}

}  // namespace meshfield
