#include "run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "meshfield/errors.hpp"

namespace meshfield::cli {

namespace {

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: bad value for \"") + key + "\": " + e.what());
  }
}

}  // namespace

FieldConfig RunConfig::field_config() const {
  FieldConfig f;
  f.frequencies = frequencies;
  f.sigma = sigma;
  f.text_dim = dim;
  f.rank = rank;
  f.reduction = reduction;
  f.ablate_tdam = ablate_tdam;
  f.seed = seed;
  return f;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.iterations = iterations;
  t.n_views = views;
  t.seed = seed;
  t.snapshot_every = snapshot_every;
  t.geometry_enabled = geometry;
  t.adam.lr = lr;
  t.render_size = render_size;
  t.render.sigma_soft = sigma_soft;
  t.render.depth_gamma = depth_gamma;
  t.augment = augment;
  t.eval_every = eval_every;
  return t;
}

std::string RunConfig::to_json() const {
  nlohmann::json j = {{"seed", seed},
                      {"backend", backend},
                      {"dim", dim},
                      {"frequencies", frequencies},
                      {"sigma", sigma},
                      {"rank", rank},
                      {"reduction", reduction},
                      {"views", views},
                      {"lr", lr},
                      {"iterations", iterations},
                      {"snapshot_every", snapshot_every},
                      {"render_size", render_size},
                      {"eval_size", eval_size},
                      {"eval_every", eval_every},
                      {"sigma_soft", sigma_soft},
                      {"depth_gamma", depth_gamma},
                      {"geometry", geometry},
                      {"augment", augment},
                      {"ablate_tdam", ablate_tdam},
                      {"its_threshold", its_threshold},
                      {"timeout_ms", timeout_ms}};
  return j.dump(2);
}

void apply_json(RunConfig& config, const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected a flat JSON object");
  for (const auto& [key, value] : j.items()) {
    if (value.is_object() || value.is_array()) throw ConfigError("config: \"" + key + "\" must be a scalar");
    const char* k = key.c_str();
    if (key == "seed") read_key(j, k, config.seed);
    else if (key == "backend") read_key(j, k, config.backend);
    else if (key == "dim") read_key(j, k, config.dim);
    else if (key == "frequencies") read_key(j, k, config.frequencies);
    else if (key == "sigma") read_key(j, k, config.sigma);
    else if (key == "rank") read_key(j, k, config.rank);
    else if (key == "reduction") read_key(j, k, config.reduction);
    else if (key == "views") read_key(j, k, config.views);
    else if (key == "lr") read_key(j, k, config.lr);
    else if (key == "iterations") read_key(j, k, config.iterations);
    else if (key == "snapshot_every") read_key(j, k, config.snapshot_every);
    else if (key == "render_size") read_key(j, k, config.render_size);
    else if (key == "eval_size") read_key(j, k, config.eval_size);
    else if (key == "eval_every") read_key(j, k, config.eval_every);
    else if (key == "sigma_soft") read_key(j, k, config.sigma_soft);
    else if (key == "depth_gamma") read_key(j, k, config.depth_gamma);
    else if (key == "geometry") read_key(j, k, config.geometry);
    else if (key == "augment") read_key(j, k, config.augment);
    else if (key == "ablate_tdam") read_key(j, k, config.ablate_tdam);
    else if (key == "its_threshold") read_key(j, k, config.its_threshold);
    else if (key == "timeout_ms") read_key(j, k, config.timeout_ms);
    else throw ConfigError("config: unknown key \"" + key + "\"");
  }
}

void apply_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_json(config, ss.str());
}

std::string resolve_backend(const std::string& backend) {
  if (backend == "remote") {
    const char* env = std::getenv("MESHFIELD_BACKEND_URL");
    if (!env || !*env) throw ConfigError("backend 'remote' needs a URL: use remote:URL or set MESHFIELD_BACKEND_URL");
    return std::string("remote:") + env;
  }
  return backend;
}

}  // namespace meshfield::cli
