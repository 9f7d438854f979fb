#include <chrono>
#include <cstdio>
#include <fstream>

#include "meshfield/errors.hpp"
#include "meshfield/optim.hpp"

namespace meshfield {

Objective Objective::from_prompt(std::string prompt) {
  if (prompt.empty()) throw InputError("objective: empty prompt");
  Objective o;
  o.kind = Kind::prompt;
  o.prompt = std::move(prompt);
  return o;
}

Objective Objective::from_target(ag::Tensor target) {
  Objective o;
  o.kind = Kind::target_embedding;
  o.target = target.detach();
  return o;
}

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (n_views < 1) throw ConfigError("n_views must be at least 1");
  if (render_size < 1) throw ConfigError("render size must be positive");
  if (!(render.sigma_soft > 0.0) || !(render.depth_gamma > 0.0)) {
    throw ConfigError("sigma_soft and depth_gamma must be positive");
  }
}

ag::Tensor resize_square(const ag::Tensor& image, std::size_t size) {
  if (image.rank() != 3) throw DimensionError("resize_square: expected H x W x 3, got " + ag::shape_str(image.shape()));
  if (image.dim(0) == size && image.dim(1) == size) return image;
  return warp_image(image, identity_warp(image.dim(0), image.dim(1)), size, kGray);
}

namespace {

std::vector<ag::Tensor> training_parameters(const StyleField& field, bool geometry_enabled) {
  std::vector<ag::Tensor> out;
  for (const auto& p : field.trainable_parameters()) {
    if (!geometry_enabled && p.name.rfind("head.position", 0) == 0) continue;
    out.push_back(p.tensor);
  }
  return out;
}

ag::Tensor resolve_target(const EmbeddingBackend& backend, const Objective& objective) {
  if (objective.kind == Objective::Kind::prompt) return backend.embed_text(objective.prompt);
  if (objective.target.numel() == 0 || objective.target.rank() != 2 || objective.target.dim(0) != 1) {
    throw DimensionError("objective: target embedding must be 1 x dim, got " +
                         ag::shape_str(objective.target.shape()));
  }
  return objective.target.detach();
}

}  // namespace

Trainer::Trainer(StyleField& field, Mesh mesh, const EmbeddingBackend& backend, Objective objective,
                 TrainConfig config)
    : field_(field),
      mesh_(std::move(mesh)),
      backend_(backend),
      config_(std::move(config)),
      target_((config_.validate(), require_differentiable(backend), resolve_target(backend, objective))),
      conditioning_(target_),
      adam_(training_parameters(field, config_.geometry_enabled), config_.adam),
      rng_(config_.seed) {
  mesh_.validate();
  if (target_.dim(1) != backend_.dim()) {
    throw DimensionError("objective: target width " + std::to_string(target_.dim(1)) + " does not match backend dim " +
                         std::to_string(backend_.dim()));
  }
  if (target_.dim(1) != field_.config().text_dim) {
    throw DimensionError("objective: embedding width " + std::to_string(target_.dim(1)) +
                         " does not match the field's text_dim " + std::to_string(field_.config().text_dim));
  }
}

ag::Tensor Trainer::fit_to_backend(const ag::Tensor& image, const WarpParams& warp) const {
  return warp_image(image, warp, backend_.input_size(), config_.augment_config.fill);
}

double Trainer::step() {
  const auto offsets = field_.predict_offsets(mesh_, conditioning_);
  const auto position =
      config_.geometry_enabled ? offsets.position : ag::Tensor::zeros({mesh_.vertices.size(), 3});
  const StylizedMesh color = apply_offsets(mesh_, offsets.color, position);
  const StylizedMesh gray = gray_variant(color);

  const auto cameras = sample_train_cameras(rng_, config_.n_views, config_.render_size);
  std::vector<ag::Tensor> color_views, gray_views;
  for (const auto& cam : cameras) {
    const auto rc = render(color, cam, config_.render).image;
    const auto rg = render(gray, cam, config_.render).image;
    const auto warp = config_.augment ? sample_warp(rng_, rc.dim(0), rc.dim(1), config_.augment_config)
                                      : identity_warp(rc.dim(0), rc.dim(1));
    color_views.push_back(fit_to_backend(rc, warp));
    gray_views.push_back(fit_to_backend(rg, warp));
  }
  phi_color_ = mean_view_embedding(backend_, color_views);
  phi_gray_ = mean_view_embedding(backend_, gray_views);
  const auto loss = clip_style_loss(phi_color_, phi_gray_, target_);
  loss.backward();
  adam_.step();
  ++iteration_;
  phi_color_ = phi_color_.detach();
  phi_gray_ = phi_gray_.detach();
  return loss.item();
}

StylizedMesh Trainer::current() const {
  ag::NoGradGuard guard;
  const auto offsets = field_.predict_offsets(mesh_, conditioning_);
  const auto position =
      config_.geometry_enabled ? offsets.position : ag::Tensor::zeros({mesh_.vertices.size(), 3});
  return apply_offsets(mesh_, offsets.color, position);
}

void write_history_csv(const RunHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iteration,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < history.loss.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, history.loss[i]);
    out << buf;
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_timing_csv(const RunHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iteration,wall_ms\n";
  char buf[64];
  for (std::size_t i = 0; i < history.wall_ms.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.3f\n", i + 1, history.wall_ms[i]);
    out << buf;
  }
  if (!out) throw IoError("failed writing " + path.string());
}

StylizeResult stylize(StyleField& field, const Mesh& mesh, const EmbeddingBackend& backend, const Objective& objective,
                      const TrainConfig& config, const std::filesystem::path& run_dir, const StylizeHooks& hooks) {
  Trainer trainer(field, mesh, backend, objective, config);
  RunHistory history;
  const bool write = !run_dir.empty();
  if (write) std::filesystem::create_directories(run_dir / "snapshots");

  auto flush_history = [&] {
    if (!write) return;
    write_history_csv(history, run_dir / "history.csv");
    write_timing_csv(history, run_dir / "timing.csv");
  };

  try {
    for (std::size_t it = 1; it <= config.iterations; ++it) {
      const auto t0 = std::chrono::steady_clock::now();
      const double loss = trainer.step();
      const auto t1 = std::chrono::steady_clock::now();
      history.loss.push_back(loss);
      history.wall_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());

      const bool snapshot = config.snapshot_every > 0 && it % config.snapshot_every == 0;
      const bool evaluate = hooks.evaluate && config.eval_every > 0 && it % config.eval_every == 0;
      if (snapshot || evaluate) {
        const auto current = trainer.current();
        if (evaluate) {
          const double score = hooks.evaluate(current, it);
          history.mes_curve.emplace_back(it, score);
          if (!history.best_iteration || score > history.best_mes) {
            history.best_iteration = it;
            history.best_mes = score;
          }
        }
        if (snapshot) {
          if (write) {
            char name[32];
            std::snprintf(name, sizeof name, "iter_%06zu", it);
            const auto base = run_dir / "snapshots" / name;
            save_mesh(current, base.string() + ".obj", MeshFormat::obj);
            Camera cam;
            cam.image_size = config.snapshot_size;
            write_png(render(current, cam, config.render).image, base.string() + ".png");
            history.snapshots.push_back(base.string() + ".obj");
          }
          if (hooks.on_snapshot) hooks.on_snapshot(current, it);
        }
      }
      if (hooks.should_stop && hooks.should_stop(it, history)) {
        history.stopped_early = it < config.iterations;
        break;
      }
    }
  } catch (...) {
    flush_history();
    throw;
  }

  flush_history();
  StylizeResult result{trainer.current(), std::move(history)};
  if (write) {
    save_mesh(result.mesh, run_dir / "final.obj", MeshFormat::obj);
    save_mesh(result.mesh, run_dir / "final.ply", MeshFormat::ply);
  }
  return result;
}

ag::Tensor make_target_embedding(const StylizedMesh& reference, const EmbeddingBackend& backend,
                                 std::size_t image_size, const RenderSettings& settings) {
  ag::NoGradGuard guard;
  const auto cameras = evaluation_cameras(image_size);
  std::vector<ag::Tensor> views;
  for (const auto& cam : cameras) views.push_back(resize_square(render(reference, cam, settings).image, backend.input_size()));
  return mean_view_embedding(backend, views).detach();
}

}  // namespace meshfield
