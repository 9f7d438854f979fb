#include "meshfield/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "meshfield/errors.hpp"

namespace meshfield {

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm(const Vec3& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }

std::vector<double> flatten(const std::vector<Vec3>& rows) {
  std::vector<double> out;
  out.reserve(rows.size() * 3);
  for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
  return out;
}

std::vector<Vec3> unflatten(std::span<const double> v) {
  std::vector<Vec3> out(v.size() / 3);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
  return out;
}

void check_positions(const ag::Tensor& positions, const std::vector<Face>& faces) {
  if (positions.rank() != 2 || positions.dim(1) != 3) {
    throw DimensionError("normals: positions must be N x 3, got " + ag::shape_str(positions.shape()));
  }
  const auto n = positions.dim(0);
  for (const auto& f : faces)
    for (auto i : f)
      if (i >= n) throw GeometryError("normals: face index out of range");
}

// Backward of u = v / |v| given upstream g: (g - u (u.g)) / |v|.
Vec3 normalize_backward(const Vec3& v, const Vec3& g) {
  const double n = norm(v);
  if (n <= 0.0) return {0.0, 0.0, 0.0};
  Vec3 u{v[0] / n, v[1] / n, v[2] / n};
  const double ug = u[0] * g[0] + u[1] * g[1] + u[2] * g[2];
  return {(g[0] - u[0] * ug) / n, (g[1] - u[1] * ug) / n, (g[2] - u[2] * ug) / n};
}

// For c = a x b: dL/da = b x g, dL/db = g x a.
void cross_backward(const Vec3& a, const Vec3& b, const Vec3& g, Vec3& ga, Vec3& gb) {
  ga = cross(b, g);
  gb = cross(g, a);
}

// Scatter the gradient of a raw face normal (p1-p0)x(p2-p0) onto the three corners.
void face_normal_backward(const std::vector<Vec3>& p, const Face& f, const Vec3& g, std::vector<double>& out) {
  const Vec3 e1 = sub(p[f[1]], p[f[0]]);
  const Vec3 e2 = sub(p[f[2]], p[f[0]]);
  Vec3 g1, g2;
  cross_backward(e1, e2, g, g1, g2);
  for (int k = 0; k < 3; ++k) {
    out[3 * f[1] + k] += g1[k];
    out[3 * f[2] + k] += g2[k];
    out[3 * f[0] + k] -= g1[k] + g2[k];
  }
}

}  // namespace

void Mesh::validate() const {
  const auto n = vertices.size();
  for (const auto& f : faces)
    for (auto i : f)
      if (i >= n) throw GeometryError("face index " + std::to_string(i) + " >= vertex count " + std::to_string(n));
  if (colors.size() != n) throw GeometryError("color count does not match vertex count");
  for (const auto& c : colors)
    for (double v : c)
      if (!(v >= 0.0 && v <= 1.0)) throw GeometryError("vertex color outside [0,1]");
}

ag::Tensor Mesh::positions_tensor() const { return ag::Tensor::from_vector({vertices.size(), 3}, flatten(vertices)); }
ag::Tensor Mesh::colors_tensor() const { return ag::Tensor::from_vector({colors.size(), 3}, flatten(colors)); }

std::vector<std::size_t> Mesh::corner_indices() const {
  std::vector<std::size_t> out;
  out.reserve(faces.size() * 3);
  for (const auto& f : faces) out.insert(out.end(), f.begin(), f.end());
  return out;
}

std::vector<Vec3> face_normals(const Mesh& mesh) {
  return unflatten(face_normals(mesh.positions_tensor(), mesh.faces).data());
}

std::vector<Vec3> vertex_normals(const Mesh& mesh) {
  return unflatten(vertex_normals(mesh.positions_tensor(), mesh.faces).data());
}

ag::Tensor face_normals(const ag::Tensor& positions, const std::vector<Face>& faces) {
  check_positions(positions, faces);
  const auto p = unflatten(positions.data());
  std::vector<double> out(faces.size() * 3);
  for (std::size_t fi = 0; fi < faces.size(); ++fi) {
    const auto& f = faces[fi];
    Vec3 n = cross(sub(p[f[1]], p[f[0]]), sub(p[f[2]], p[f[0]]));
    const double len = norm(n);
    if (len > 0.0) n = {n[0] / len, n[1] / len, n[2] / len};
    else n = {0.0, 0.0, 1.0};
    std::copy(n.begin(), n.end(), out.begin() + 3 * fi);
  }
  return ag::make_op(
      {faces.size(), 3}, std::move(out), {positions},
      [positions, faces](std::span<const double> g, const ag::GradSlots& slots) {
        const auto p = unflatten(positions.data());
        for (std::size_t fi = 0; fi < faces.size(); ++fi) {
          const auto& f = faces[fi];
          const Vec3 raw = cross(sub(p[f[1]], p[f[0]]), sub(p[f[2]], p[f[0]]));
          const Vec3 graw = normalize_backward(raw, {g[3 * fi], g[3 * fi + 1], g[3 * fi + 2]});
          face_normal_backward(p, f, graw, *slots[0]);
        }
      },
      "face_normals");
}

ag::Tensor vertex_normals(const ag::Tensor& positions, const std::vector<Face>& faces) {
  check_positions(positions, faces);
  const auto p = unflatten(positions.data());
  const std::size_t n = p.size();
  auto accum = std::make_shared<std::vector<Vec3>>(n, Vec3{0.0, 0.0, 0.0});
  for (const auto& f : faces) {
    const Vec3 fn = cross(sub(p[f[1]], p[f[0]]), sub(p[f[2]], p[f[0]]));
    for (auto i : f)
      for (int k = 0; k < 3; ++k) (*accum)[i][k] += fn[k];
  }
  std::vector<double> out(n * 3);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& a = (*accum)[i];
    const double len = norm(a);
    Vec3 u = len > 0.0 ? Vec3{a[0] / len, a[1] / len, a[2] / len} : Vec3{0.0, 0.0, 1.0};
    std::copy(u.begin(), u.end(), out.begin() + 3 * i);
  }
  return ag::make_op(
      {n, 3}, std::move(out), {positions},
      [positions, faces, accum](std::span<const double> g, const ag::GradSlots& slots) {
        const auto p = unflatten(positions.data());
        std::vector<Vec3> gacc(p.size());
        for (std::size_t i = 0; i < p.size(); ++i)
          gacc[i] = normalize_backward((*accum)[i], {g[3 * i], g[3 * i + 1], g[3 * i + 2]});
        for (const auto& f : faces) {
          Vec3 gf{0.0, 0.0, 0.0};
          for (auto i : f)
            for (int k = 0; k < 3; ++k) gf[k] += gacc[i][k];
          face_normal_backward(p, f, gf, *slots[0]);
        }
      },
      "vertex_normals");
}

ag::Tensor StylizedMesh::effective_positions() const {
  return base.positions_tensor() + ag::clamp_row_norm(position_offsets, kMaxOffsetNorm);
}

ag::Tensor StylizedMesh::effective_colors() const {
  if (gray) return ag::Tensor::full({base.num_vertices(), 3}, kGray);
  return ag::clamp(base.colors_tensor() + color_offsets, 0.0, 1.0);
}

Mesh StylizedMesh::bake() const {
  ag::NoGradGuard no_grad;
  Mesh out;
  out.faces = base.faces;
  out.vertices = unflatten(effective_positions().data());
  out.colors = unflatten(effective_colors().data());
  return out;
}

double StylizedMesh::max_offset_norm() const {
  ag::NoGradGuard no_grad;
  auto clamped = ag::clamp_row_norm(position_offsets, kMaxOffsetNorm);
  auto v = clamped.data();
  double best = 0.0;
  for (std::size_t i = 0; i + 2 < v.size(); i += 3)
    best = std::max(best, std::sqrt(v[i] * v[i] + v[i + 1] * v[i + 1] + v[i + 2] * v[i + 2]));
  return best;
}

Mesh normalize_geometry(const Mesh& mesh) {
  if (mesh.vertices.size() < 3) throw GeometryError("normalize: need at least 3 vertices");
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-lo[0], -lo[1], -lo[2]};
  for (const auto& v : mesh.vertices)
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], v[k]);
      hi[k] = std::max(hi[k], v[k]);
    }
  double extent = 0.0;
  for (int k = 0; k < 3; ++k) extent = std::max(extent, hi[k] - lo[k]);
  if (!(extent > 0.0) || !std::isfinite(extent)) throw GeometryError("normalize: degenerate mesh extent");
  const double scale = 1.0 / extent;
  Vec3 center{(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, (lo[2] + hi[2]) / 2.0};

  Mesh out;
  out.faces = mesh.faces;
  out.vertices.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) {
    Vec3 p;
    for (int k = 0; k < 3; ++k) p[k] = std::clamp((v[k] - center[k]) * scale, -0.5, 0.5);
    out.vertices.push_back(p);
  }
  out.colors = mesh.colors;
  if (out.colors.size() != out.vertices.size()) out.colors.assign(mesh.vertices.size(), Vec3{kGray, kGray, kGray});
  out.validate();
  return out;
}

Mesh normalize_and_init(const Mesh& mesh) {
  Mesh out = normalize_geometry(mesh);
  out.colors.assign(out.vertices.size(), Vec3{kGray, kGray, kGray});
  return out;
}

StylizedMesh apply_offsets(const Mesh& mesh, const ag::Tensor& color_offsets, const ag::Tensor& position_offsets) {
  const ag::Shape expect{mesh.num_vertices(), 3};
  if (color_offsets.shape() != expect || position_offsets.shape() != expect) {
    throw DimensionError("apply_offsets: expected offsets of shape " + ag::shape_str(expect) + ", got " +
                         ag::shape_str(color_offsets.shape()) + " and " + ag::shape_str(position_offsets.shape()));
  }
  StylizedMesh s;
  s.base = mesh;
  s.color_offsets = color_offsets;
  s.position_offsets = ag::clamp_row_norm(position_offsets, kMaxOffsetNorm);
  return s;
}

StylizedMesh unstyled(const Mesh& mesh) {
  return apply_offsets(mesh, ag::Tensor::zeros({mesh.num_vertices(), 3}), ag::Tensor::zeros({mesh.num_vertices(), 3}));
}

StylizedMesh gray_variant(const StylizedMesh& s) {
  StylizedMesh out = s;
  out.gray = true;
  return out;
}

}  // namespace meshfield
