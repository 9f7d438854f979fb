#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <json.hpp>
#include <memory>
#include <ostream>

#include "meshfield/bench.hpp"
#include "meshfield/embed.hpp"
#include "meshfield/errors.hpp"
#include "run_config.hpp"

namespace meshfield::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flags that override RunConfig values, applied after the config file.
class Overrides {
 public:
  explicit Overrides(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_file_, "Flat JSON config file")->check(CLI::ExistingFile);
    bind("--seed", &RunConfig::seed, "Random seed");
    bind("--backend", &RunConfig::backend, "Embedding backend: toy | remote:URL | remote");
    bind("--dim", &RunConfig::dim, "Embedding width");
    bind("--frequencies", &RunConfig::frequencies, "Positional-encoding frequencies C");
    bind("--sigma", &RunConfig::sigma, "Frequency standard deviation");
    bind("--rank", &RunConfig::rank, "Hypernetwork rank K");
    bind("--reduction", &RunConfig::reduction, "Attention reduction factor r");
    bind("--views", &RunConfig::views, "Views per iteration");
    bind("--lr", &RunConfig::lr, "Adam learning rate");
    bind("--iterations", &RunConfig::iterations, "Training iterations");
    bind("--snapshot-every", &RunConfig::snapshot_every, "Snapshot cadence (0 disables)");
    bind("--render-size", &RunConfig::render_size, "Training render resolution");
    bind("--eval-size", &RunConfig::eval_size, "Evaluation render resolution");
    bind("--eval-every", &RunConfig::eval_every, "MES evaluation cadence for ITS");
    bind("--sigma-soft", &RunConfig::sigma_soft, "Soft-coverage scale");
    bind("--depth-gamma", &RunConfig::depth_gamma, "Depth softmax temperature");
    bind("--timeout-ms", &RunConfig::timeout_ms, "Remote backend timeout");
    flag("--no-geometry", &RunConfig::geometry, false, "Disable position offsets");
    flag("--no-augment", &RunConfig::augment, false, "Disable 2D augmentation");
    flag("--ablate-tdam", &RunConfig::ablate_tdam, true, "Bypass the text-guided attention (static baseline)");
  }

  template <typename T>
  void bind(const std::string& name, T RunConfig::*member, const std::string& help) {
    auto value = std::make_shared<T>();
    auto* opt = app_->add_option(name, *value, help);
    apply_.push_back([opt, value, member](RunConfig& c) {
      if (opt->count() > 0) c.*member = *value;
    });
  }

  void flag(const std::string& name, bool RunConfig::*member, bool when_set, const std::string& help) {
    auto* opt = app_->add_flag(name, help);
    apply_.push_back([opt, member, when_set](RunConfig& c) {
      if (opt->count() > 0) c.*member = when_set;
    });
  }

  RunConfig resolve() const {
    RunConfig c;
    if (!config_file_.empty()) apply_file(c, config_file_);
    for (const auto& f : apply_) f(c);
    c.backend = resolve_backend(c.backend);
    return c;
  }

 private:
  CLI::App* app_;
  std::string config_file_;
  std::vector<std::function<void(RunConfig&)>> apply_;
};

std::unique_ptr<EmbeddingBackend> make_eval_backend(const RunConfig& c) {
  if (c.backend == "toy") return nullptr;
  if (c.backend.rfind("remote:", 0) != 0) throw ConfigError("unknown backend '" + c.backend + "'");
  RemoteOptions opts;
  opts.url = c.backend.substr(7);
  opts.dim = c.dim;
  opts.timeout = std::chrono::milliseconds(c.timeout_ms);
  opts.input_size = c.eval_size;
  return std::make_unique<RemoteBackend>(opts);
}

void require_file(const std::string& what, const std::string& path) {
  if (path.empty()) throw UsageError(what + " is required");
  if (!std::filesystem::is_regular_file(path)) throw UsageError(what + " not found: " + path);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text << '\n';
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string mes_line(double score) {
  return "MES: " + fmt("%.6f", score) + " (x100: " + fmt("%.2f", score * 100.0) + ")";
}

struct StylizeArgs {
  std::string mesh, prompt, target_from, out = "run";
};

int cmd_stylize(const RunConfig& c, const StylizeArgs& a, std::ostream& out) {
  require_file("--mesh", a.mesh);
  if (a.prompt.empty() == a.target_from.empty()) throw UsageError("exactly one of --prompt or --target-from is required");
  if (!a.target_from.empty()) require_file("--target-from", a.target_from);

  const Mesh mesh = normalize_and_init(load_mesh(a.mesh));
  ToyEmbedder toy(c.dim, c.seed, c.render_size);
  const auto eval_remote = make_eval_backend(c);
  const EmbeddingBackend& eval = eval_remote ? static_cast<const EmbeddingBackend&>(*eval_remote) : toy;

  Objective objective;
  ag::Tensor eval_target;
  std::optional<StylizedMesh> reference;
  if (!a.prompt.empty()) {
    objective = Objective::from_prompt(a.prompt);
    eval_target = eval.embed_text(a.prompt);
  } else {
    reference = unstyled(normalize_geometry(load_mesh(a.target_from)));
    objective = Objective::from_target(make_target_embedding(*reference, toy, c.render_size));
    eval_target = eval_remote ? make_target_embedding(*reference, eval, c.eval_size) : objective.target;
  }

  const std::filesystem::path run_dir = a.out;
  std::filesystem::create_directories(run_dir);
  write_text(run_dir / "config.json", c.to_json());

  StyleField field(c.field_config());
  const auto result = stylize(field, mesh, toy, objective, c.train_config(), run_dir);
  const double score = mes_views(result.mesh, eval_target, eval, c.eval_size, c.train_config().render).score;

  const auto cams = evaluation_cameras(c.eval_size);
  nlohmann::json report = {{"command", "stylize"},
                           {"objective", a.prompt.empty() ? "target_embedding" : "prompt"},
                           {"prompt", a.prompt},
                           {"target_from", a.target_from},
                           {"iterations", result.history.loss.size()},
                           {"final_loss", result.history.loss.back()},
                           {"mes", score},
                           {"mes_x100", score * 100.0},
                           {"backend", eval.name()},
                           {"camera_hash", camera_set_hash(cams)},
                           {"max_offset_norm", result.mesh.max_offset_norm()},
                           {"config", nlohmann::json::parse(c.to_json())}};
  write_text(run_dir / "report.json", report.dump(2));

  out << "final loss: " << fmt("%.6f", result.history.loss.back()) << '\n';
  out << mes_line(score) << '\n';
  out << "run directory: " << run_dir.string() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string mesh, prompt, out = "eval";
};

int cmd_eval(const RunConfig& c, const EvalArgs& a, std::ostream& out) {
  require_file("--mesh", a.mesh);
  if (a.prompt.empty()) throw UsageError("--prompt is required");
  const auto mesh = unstyled(load_mesh(a.mesh));
  ToyEmbedder toy(c.dim, c.seed, c.render_size);
  const auto eval_remote = make_eval_backend(c);
  const EmbeddingBackend& eval = eval_remote ? static_cast<const EmbeddingBackend&>(*eval_remote) : toy;

  const auto text = eval.embed_text(a.prompt);
  RenderSettings settings = c.train_config().render;
  const std::filesystem::path dir = a.out;
  std::filesystem::create_directories(dir);
  {
    ag::NoGradGuard guard;
    for (const auto& cam : evaluation_cameras(c.eval_size)) {
      char name[64];
      std::snprintf(name, sizeof name, "azi%d_ele%d.png", static_cast<int>(cam.azimuth),
                    static_cast<int>(cam.elevation));
      write_png(render(mesh, cam, settings).image, dir / name);
    }
  }
  const auto result = mes_views(mesh, text, eval, c.eval_size, settings);
  out << mes_line(result.score) << '\n';
  return kExitOk;
}

struct BenchArgs {
  std::string manifest, out = "bench";
};

int cmd_bench(RunConfig c, const BenchArgs& a, std::ostream& out) {
  require_file("--manifest", a.manifest);
  const auto manifest = load_manifest(a.manifest);
  ToyEmbedder toy(c.dim, c.seed, c.render_size);
  const auto eval_remote = make_eval_backend(c);
  const EmbeddingBackend& eval = eval_remote ? static_cast<const EmbeddingBackend&>(*eval_remote) : toy;

  BenchmarkConfig bc;
  bc.field = c.field_config();
  bc.train = c.train_config();
  bc.train.snapshot_every = 0;
  bc.its_threshold = c.its_threshold;
  bc.eval_size = c.eval_size;
  bc.config_json = c.to_json();
  const auto report = run_benchmark(manifest, bc, toy, eval, a.out);

  out << "samples: " << report.samples.size() << ", failures: " << report.failures << '\n';
  out << "mean " << mes_line(report.mean_mes) << '\n';
  out << "mean ITS@" << fmt("%.2f", report.its_threshold) << ": " << fmt("%.1f", report.mean_its) << '\n';
  out << "report: " << (std::filesystem::path(a.out) / "report.json").string() << '\n';
  return report.failures == 0 ? kExitOk : kExitFailure;
}

struct SampleArgs {
  std::string out = "samples";
  unsigned subdiv = 3;
  unsigned cube_segments = 8;
};

int cmd_gen_samples(const SampleArgs& a, std::ostream& out) {
  SampleOptions opts;
  opts.icosphere_subdivisions = a.subdiv;
  opts.cube_segments = a.cube_segments;
  const auto manifest = generate_sample_meshes(a.out, opts);
  for (const auto& e : manifest.entries) out << manifest.mesh_path(e).string() << '\n';
  out << (std::filesystem::path(a.out) / "manifest.json").string() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Text-conditioned mesh stylization"};
  app.name("meshfield");
  app.set_version_flag("--version", "meshfield 0.1.0");
  app.require_subcommand(1);

  auto* stylize_cmd = app.add_subcommand("stylize", "Stylize a mesh towards a prompt or a reference mesh");
  Overrides stylize_ov(stylize_cmd);
  StylizeArgs stylize_args;
  stylize_cmd->add_option("--mesh", stylize_args.mesh, "Input mesh (.obj or .ply)");
  stylize_cmd->add_option("--prompt", stylize_args.prompt, "Target text");
  stylize_cmd->add_option("--target-from", stylize_args.target_from, "Reference mesh whose renders define the target");
  stylize_cmd->add_option("--out", stylize_args.out, "Run directory")->capture_default_str();

  auto* eval_cmd = app.add_subcommand("eval", "Score a mesh against a prompt over the 24 evaluation views");
  Overrides eval_ov(eval_cmd);
  EvalArgs eval_args;
  eval_cmd->add_option("--mesh", eval_args.mesh, "Stylized mesh");
  eval_cmd->add_option("--prompt", eval_args.prompt, "Text prompt");
  eval_cmd->add_option("--out", eval_args.out, "Directory for the rendered views")->capture_default_str();

  auto* bench_cmd = app.add_subcommand("bench", "Run a benchmark manifest");
  Overrides bench_ov(bench_cmd);
  BenchArgs bench_args;
  bench_ov.bind("--its-threshold", &RunConfig::its_threshold, "MES threshold for ITS (default 0.22)");
  bench_cmd->add_option("--manifest", bench_args.manifest, "Manifest JSON");
  bench_cmd->add_option("--out", bench_args.out, "Report directory")->capture_default_str();

  auto* samples_cmd = app.add_subcommand("gen-samples", "Write procedural sample meshes and a manifest");
  SampleArgs sample_args;
  samples_cmd->add_option("--out", sample_args.out, "Output directory")->capture_default_str();
  samples_cmd->add_option("--subdiv", sample_args.subdiv, "Icosphere subdivision level")
      ->capture_default_str()
      ->check(CLI::Range(0u, 7u));
  samples_cmd->add_option("--cube-segments", sample_args.cube_segments, "Cube grid segments per edge")
      ->capture_default_str()
      ->check(CLI::Range(1u, 256u));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (stylize_cmd->parsed()) return cmd_stylize(stylize_ov.resolve(), stylize_args, out);
    if (eval_cmd->parsed()) return cmd_eval(eval_ov.resolve(), eval_args, out);
    if (bench_cmd->parsed()) return cmd_bench(bench_ov.resolve(), bench_args, out);
    if (samples_cmd->parsed()) return cmd_gen_samples(sample_args, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace meshfield::cli
