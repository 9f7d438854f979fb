#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "meshfield/autograd.hpp"

namespace meshfield {

using Vec3 = std::array<double, 3>;
using Face = std::array<std::uint32_t, 3>;

enum class MeshFormat { obj, ply };

/// Gray used for initialization and for the geometry-only branch.
inline constexpr double kGray = 0.5;
/// Upper bound on the per-vertex position offset norm.
inline constexpr double kMaxOffsetNorm = 0.1;

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Vec3> colors;

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_faces() const { return faces.size(); }

  /// Throws GeometryError when a face index is out of range or colors are missing / out of [0,1].
  void validate() const;

  ag::Tensor positions_tensor() const;
  ag::Tensor colors_tensor() const;
  /// Flattened face indices, three per face.
  std::vector<std::size_t> corner_indices() const;
};

/// Area-weighted unit vertex normals. Isolated vertices get +Z.
std::vector<Vec3> vertex_normals(const Mesh& mesh);
std::vector<Vec3> face_normals(const Mesh& mesh);

/// Differentiable area-weighted vertex normals of an N x 3 position tensor.
ag::Tensor vertex_normals(const ag::Tensor& positions, const std::vector<Face>& faces);
/// Differentiable unit face normals, M x 3.
ag::Tensor face_normals(const ag::Tensor& positions, const std::vector<Face>& faces);

/// A base mesh plus predicted per-vertex offsets.
///
/// The effective geometry is P + clamp_row_norm(dP, 0.1); the effective colors
/// are clamp(C + dC, 0, 1), or uniform gray for the geometry-only variant.
struct StylizedMesh {
  Mesh base;
  ag::Tensor color_offsets;
  ag::Tensor position_offsets;
  bool gray = false;

  ag::Tensor effective_positions() const;
  ag::Tensor effective_colors() const;

  /// Snapshot of the effective geometry and colors as a plain mesh.
  Mesh bake() const;
  double max_offset_norm() const;
};

Mesh load_mesh(const std::filesystem::path& path, MeshFormat format);
/// Picks the format from the file extension.
Mesh load_mesh(const std::filesystem::path& path);

/// Centers the bounding box at the origin and scales the largest extent to 1, keeping colors.
Mesh normalize_geometry(const Mesh& mesh);
/// normalize_geometry, then paints every vertex gray.
Mesh normalize_and_init(const Mesh& mesh);

StylizedMesh apply_offsets(const Mesh& mesh, const ag::Tensor& color_offsets, const ag::Tensor& position_offsets);
/// Wraps a mesh with zero offsets.
StylizedMesh unstyled(const Mesh& mesh);
StylizedMesh gray_variant(const StylizedMesh& s);

void save_mesh(const StylizedMesh& s, const std::filesystem::path& path, MeshFormat format);
void save_mesh(const StylizedMesh& s, const std::filesystem::path& path);
void save_mesh(const Mesh& m, const std::filesystem::path& path, MeshFormat format);

MeshFormat format_from_extension(const std::filesystem::path& path);

}  // namespace meshfield
