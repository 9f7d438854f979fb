#pragma once

// Multi-view embedding score (MES), iterations-to-score (ITS) and the manifest runner.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "meshfield/embed.hpp"
#include "meshfield/field.hpp"
#include "meshfield/mesh.hpp"
#include "meshfield/optim.hpp"
#include "meshfield/render.hpp"

namespace meshfield {

inline constexpr std::size_t kItsCap = 1200;
inline constexpr std::size_t kItsCapValue = 2000;
inline constexpr double kDefaultItsThreshold = 0.22;
inline constexpr std::string_view kPromptTemplate = "A 3D rendering of {}, in unreal engine.";

/// Substitutes `subject` for the {} in the default prompt template.
std::string apply_prompt_template(std::string_view subject);

struct MesResult {
  double score = 0.0;           // mean cosine over the views, in [-1, 1]
  std::vector<double> per_view;  // in evaluation_cameras() order
};

/// Renders the 24 evaluation views (no augmentation) and averages their cosine
/// similarity to `text_embedding`. Views the backend fails on are collected and
/// reported together in a PartialResultError.
MesResult mes_views(const StylizedMesh& mesh, const ag::Tensor& text_embedding, const EmbeddingBackend& backend,
                    std::size_t image_size = 224, const RenderSettings& settings = {});
double mes(const StylizedMesh& mesh, std::string_view prompt, const EmbeddingBackend& backend,
           std::size_t image_size = 224, const RenderSettings& settings = {});

/// Smallest recorded iteration (<= cap) whose score reaches `threshold`, else cap_value.
/// An empty curve throws InputError.
std::size_t its(std::span<const std::pair<std::size_t, double>> curve, double threshold, std::size_t cap = kItsCap,
                std::size_t cap_value = kItsCapValue);

struct ManifestEntry {
  std::string mesh;  // relative to the manifest directory
  std::string category;
  std::vector<std::string> prompts;
};

struct BenchmarkManifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;

  std::filesystem::path mesh_path(const ManifestEntry& entry) const { return base_dir / entry.mesh; }
};

/// Parses a JSON list of {mesh, category, prompts[]}. Entries without prompts get
/// the template applied to their category.
BenchmarkManifest parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir);
BenchmarkManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const BenchmarkManifest& manifest, const std::filesystem::path& path);

struct BenchmarkConfig {
  FieldConfig field;
  TrainConfig train;
  double its_threshold = kDefaultItsThreshold;
  std::size_t eval_size = 224;
  /// Resolved configuration echoed verbatim (as JSON text) into report.json.
  std::string config_json = "{}";
};

struct SampleResult {
  std::string key;  // "<mesh>#<prompt index>"
  std::string mesh;
  std::string category;
  std::string prompt;
  double mes = 0.0;  // final iteration
  double best_mes = 0.0;
  std::size_t best_iteration = 0;
  std::size_t its = kItsCapValue;
  std::size_t iterations = 0;
  double final_loss = 0.0;
  std::vector<std::pair<std::size_t, double>> curve;
  std::string error;  // empty on success
};

struct MetricReport {
  std::vector<SampleResult> samples;  // sorted by key
  double mean_mes = 0.0;              // over successful samples
  double mean_its = 0.0;
  double its_threshold = kDefaultItsThreshold;
  std::size_t failures = 0;
  std::string camera_hash;
  std::string backend;
};

/// Stylizes every (mesh, prompt) pair with `train_backend`, tracking MES under
/// `eval_backend` every train.eval_every iterations. Per-entry failures are
/// recorded and the run continues. When `out_dir` is non-empty, report.csv and
/// report.json are written there.
MetricReport run_benchmark(const BenchmarkManifest& manifest, const BenchmarkConfig& config,
                           const EmbeddingBackend& train_backend, const EmbeddingBackend& eval_backend,
                           const std::filesystem::path& out_dir = {});

/// Arithmetic mean of the per-sample values of successful samples, recomputed in place.
void aggregate(MetricReport& report);
void write_report(const MetricReport& report, const std::string& config_json, const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------------
// Procedural sample meshes.

/// Subdivided icosahedron on the unit sphere: 10 * 4^n + 2 vertices, 20 * 4^n faces.
Mesh make_icosphere(unsigned subdivisions);
/// Cube [-0.5, 0.5]^3 with an n x n grid per side: 6 n^2 + 2 vertices.
Mesh make_cube(unsigned segments);
Mesh make_torus(unsigned major_segments = 48, unsigned minor_segments = 24, double major_radius = 0.35,
                double minor_radius = 0.15);

struct SampleOptions {
  unsigned icosphere_subdivisions = 3;
  unsigned cube_segments = 8;
};

/// Writes icosphere.obj, cube.obj, torus.obj and manifest.json (5 prompts each) into `out_dir`.
BenchmarkManifest generate_sample_meshes(const std::filesystem::path& out_dir, const SampleOptions& options = {});

}  // namespace meshfield
