#include <cmath>
#include <map>
#include <numbers>

#include "meshfield/bench.hpp"
#include "meshfield/errors.hpp"

namespace meshfield {

namespace {

Vec3 unit(const Vec3& v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {v[0] / n, v[1] / n, v[2] / n};
}

void paint_gray(Mesh& m) { m.colors.assign(m.vertices.size(), Vec3{kGray, kGray, kGray}); }

}  // namespace

Mesh make_icosphere(unsigned subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  Mesh m;
  for (const Vec3& v : std::vector<Vec3>{{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}})
    m.vertices.push_back(unit(v));
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (unsigned level = 0; level < subdivisions; ++level) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoints;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      auto it = midpoints.find(key);
      if (it != midpoints.end()) return it->second;
      const auto& p = m.vertices[a];
      const auto& q = m.vertices[b];
      m.vertices.push_back(unit({(p[0] + q[0]) / 2, (p[1] + q[1]) / 2, (p[2] + q[2]) / 2}));
      const auto index = static_cast<std::uint32_t>(m.vertices.size() - 1);
      midpoints.emplace(key, index);
      return index;
    };
    std::vector<Face> next;
    next.reserve(m.faces.size() * 4);
    for (const auto& f : m.faces) {
      const auto ab = midpoint(f[0], f[1]), bc = midpoint(f[1], f[2]), ca = midpoint(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.faces = std::move(next);
  }
  paint_gray(m);
  return m;
}

Mesh make_cube(unsigned segments) {
  if (segments < 1) throw ConfigError("make_cube: segments must be at least 1");
  const unsigned n = segments;
  Mesh m;
  std::map<std::array<unsigned, 3>, std::uint32_t> lattice;
  auto vertex = [&](std::array<unsigned, 3> ijk) {
    auto it = lattice.find(ijk);
    if (it != lattice.end()) return it->second;
    m.vertices.push_back({static_cast<double>(ijk[0]) / n - 0.5, static_cast<double>(ijk[1]) / n - 0.5,
                          static_cast<double>(ijk[2]) / n - 0.5});
    const auto index = static_cast<std::uint32_t>(m.vertices.size() - 1);
    lattice.emplace(ijk, index);
    return index;
  };
  // Each side: fixed axis and value, plus two in-plane axes ordered so (u x v) points outward.
  struct Side {
    int axis, u, v;
    unsigned value;
  };
  const Side sides[6] = {{0, 1, 2, n}, {0, 2, 1, 0}, {1, 2, 0, n}, {1, 0, 2, 0}, {2, 0, 1, n}, {2, 1, 0, 0}};
  for (const auto& s : sides) {
    for (unsigned a = 0; a < n; ++a)
      for (unsigned b = 0; b < n; ++b) {
        auto at = [&](unsigned da, unsigned db) {
          std::array<unsigned, 3> ijk{};
          ijk[s.axis] = s.value;
          ijk[s.u] = a + da;
          ijk[s.v] = b + db;
          return vertex(ijk);
        };
        const auto v00 = at(0, 0), v10 = at(1, 0), v11 = at(1, 1), v01 = at(0, 1);
        m.faces.push_back({v00, v10, v11});
        m.faces.push_back({v00, v11, v01});
      }
  }
  paint_gray(m);
  return m;
}

Mesh make_torus(unsigned major_segments, unsigned minor_segments, double major_radius, double minor_radius) {
  if (major_segments < 3 || minor_segments < 3) throw ConfigError("make_torus: need at least 3 segments per ring");
  Mesh m;
  const double two_pi = 2.0 * std::numbers::pi;
  for (unsigned i = 0; i < major_segments; ++i) {
    const double u = two_pi * i / major_segments;
    for (unsigned j = 0; j < minor_segments; ++j) {
      const double v = two_pi * j / minor_segments;
      const double r = major_radius + minor_radius * std::cos(v);
      m.vertices.push_back({r * std::cos(u), minor_radius * std::sin(v), r * std::sin(u)});
    }
  }
  auto idx = [&](unsigned i, unsigned j) {
    return static_cast<std::uint32_t>((i % major_segments) * minor_segments + (j % minor_segments));
  };
  for (unsigned i = 0; i < major_segments; ++i)
    for (unsigned j = 0; j < minor_segments; ++j) {
      const auto a = idx(i, j), b = idx(i + 1, j), c = idx(i + 1, j + 1), d = idx(i, j + 1);
      m.faces.push_back({a, d, c});
      m.faces.push_back({a, c, b});
    }
  paint_gray(m);
  return m;
}

BenchmarkManifest generate_sample_meshes(const std::filesystem::path& out_dir, const SampleOptions& options) {
  std::filesystem::create_directories(out_dir);
  struct Sample {
    std::string file, category;
    Mesh mesh;
    std::vector<std::string> subjects;
  };
  std::vector<Sample> samples;
  samples.push_back({"icosphere.obj", "sphere", make_icosphere(options.icosphere_subdivisions),
                     {"a marble sphere", "a glowing lava ball", "a wooden ball", "a frosted glass orb", "a golden sphere"}});
  samples.push_back({"cube.obj", "cube", make_cube(options.cube_segments),
                     {"a brick cube", "a rusty metal box", "a wooden crate", "an ice cube", "a jade block"}});
  samples.push_back({"torus.obj", "torus", make_torus(),
                     {"a chocolate donut", "a golden ring", "a rubber tire", "a stone ring", "a neon torus"}});

  BenchmarkManifest manifest;
  manifest.base_dir = out_dir;
  for (auto& s : samples) {
    save_mesh(s.mesh, out_dir / s.file, MeshFormat::obj);
    ManifestEntry e{s.file, s.category, {}};
    for (const auto& subject : s.subjects) e.prompts.push_back(apply_prompt_template(subject));
    manifest.entries.push_back(std::move(e));
  }
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace meshfield
