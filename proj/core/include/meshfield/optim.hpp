#pragma once

// Adam and the stylization training loop.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "meshfield/autograd.hpp"
#include "meshfield/embed.hpp"
#include "meshfield/field.hpp"
#include "meshfield/mesh.hpp"
#include "meshfield/render.hpp"

namespace meshfield {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(std::vector<ag::Tensor> params, AdamConfig config = {});

  /// Bias-corrected update of every parameter, then zeroes the gradients.
  /// A parameter without a gradient buffer throws ContractError.
  void step();

  std::size_t step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<ag::Tensor>& parameters() const { return params_; }
  std::span<const double> first_moment(std::size_t i) const { return m_.at(i); }
  std::span<const double> second_moment(std::size_t i) const { return v_.at(i); }

 private:
  std::vector<ag::Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t step_ = 0;
};

/// What the renders are pulled towards: a prompt embedded by the backend, or a fixed embedding.
struct Objective {
  enum class Kind { prompt, target_embedding };
  Kind kind = Kind::prompt;
  std::string prompt;
  ag::Tensor target;  // 1 x dim, used when kind == target_embedding

  static Objective from_prompt(std::string prompt);
  static Objective from_target(ag::Tensor target);
};

struct TrainConfig {
  std::size_t iterations = 1200;
  std::size_t n_views = 5;
  std::uint64_t seed = 0;
  std::size_t snapshot_every = 50;
  bool geometry_enabled = true;
  AdamConfig adam;
  std::size_t render_size = 64;
  RenderSettings render;
  bool augment = true;
  AugmentConfig augment_config;
  /// MES-style evaluation cadence for StylizeHooks::evaluate; 0 disables it.
  std::size_t eval_every = 0;
  /// Side length of snapshot PNGs.
  std::size_t snapshot_size = 224;

  void validate() const;
};

struct RunHistory {
  std::vector<double> loss;                              // one per completed iteration
  std::vector<double> wall_ms;                           // one per completed iteration
  std::vector<std::pair<std::size_t, double>> mes_curve;  // (iteration, score)
  std::vector<std::filesystem::path> snapshots;
  std::optional<std::size_t> best_iteration;
  double best_mes = 0.0;
  bool stopped_early = false;
};

struct StylizeHooks {
  /// Scores the current mesh; called every TrainConfig::eval_every iterations.
  std::function<double(const StylizedMesh&, std::size_t iteration)> evaluate;
  /// Called at every snapshot iteration with the current mesh.
  std::function<void(const StylizedMesh&, std::size_t iteration)> on_snapshot;
  /// Returning true ends training after the current iteration.
  std::function<bool(std::size_t iteration, const RunHistory&)> should_stop;
};

/// One training loop over a normalized mesh.
class Trainer {
 public:
  Trainer(StyleField& field, Mesh mesh, const EmbeddingBackend& backend, Objective objective, TrainConfig config);

  /// predict -> offset -> render color and gray views -> augment -> embed -> loss -> backward -> Adam.
  double step();

  /// The stylized mesh for the current parameters, without recording gradients.
  StylizedMesh current() const;

  std::size_t iteration() const { return iteration_; }
  const ag::Tensor& conditioning() const { return conditioning_; }
  const ag::Tensor& target() const { return target_; }
  const ag::Tensor& last_phi_color() const { return phi_color_; }
  const ag::Tensor& last_phi_gray() const { return phi_gray_; }
  const Mesh& mesh() const { return mesh_; }
  const TrainConfig& config() const { return config_; }
  Adam& optimizer() { return adam_; }

 private:
  ag::Tensor fit_to_backend(const ag::Tensor& image, const WarpParams& warp) const;

  StyleField& field_;
  Mesh mesh_;
  const EmbeddingBackend& backend_;
  TrainConfig config_;
  ag::Tensor target_;
  ag::Tensor conditioning_;
  Adam adam_;
  std::mt19937_64 rng_;
  std::size_t iteration_ = 0;
  ag::Tensor phi_color_, phi_gray_;
};

struct StylizeResult {
  StylizedMesh mesh;
  RunHistory history;
};

/// Runs up to config.iterations steps. When `run_dir` is non-empty it receives
/// history.csv (iteration,loss), timing.csv (iteration,wall_ms),
/// snapshots/iter_%06d.{obj,png} and final.{obj,ply}. If training throws,
/// the history completed so far is written before the error propagates.
StylizeResult stylize(StyleField& field, const Mesh& mesh, const EmbeddingBackend& backend, const Objective& objective,
                      const TrainConfig& config, const std::filesystem::path& run_dir = {},
                      const StylizeHooks& hooks = {});

/// Mean embedding of the 24 evaluation views of `reference`, detached.
ag::Tensor make_target_embedding(const StylizedMesh& reference, const EmbeddingBackend& backend,
                                 std::size_t image_size = 224, const RenderSettings& settings = {});

/// Resamples an H x W x 3 image to side `size` (bilinear); returns it unchanged if it already matches.
ag::Tensor resize_square(const ag::Tensor& image, std::size_t size);

void write_history_csv(const RunHistory& history, const std::filesystem::path& path);
void write_timing_csv(const RunHistory& history, const std::filesystem::path& path);

}  // namespace meshfield
