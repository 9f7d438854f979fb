#pragma once

// Resolved command-line configuration. Precedence: flags > config file > defaults.

#include <cstdint>
#include <filesystem>
#include <string>

#include "meshfield/bench.hpp"
#include "meshfield/field.hpp"
#include "meshfield/optim.hpp"

namespace meshfield::cli {

struct RunConfig {
  std::uint64_t seed = 0;
  std::string backend = "toy";
  std::size_t dim = 512;
  std::size_t frequencies = 256;
  double sigma = 12.0;
  std::size_t rank = 30;
  std::size_t reduction = 8;
  std::size_t views = 5;
  double lr = 5e-4;
  std::size_t iterations = 1200;
  std::size_t snapshot_every = 50;
  std::size_t render_size = 64;
  std::size_t eval_size = 224;
  std::size_t eval_every = 10;
  double sigma_soft = 1e-4;
  double depth_gamma = 1e-4;
  bool geometry = true;
  bool augment = true;
  bool ablate_tdam = false;
  double its_threshold = kDefaultItsThreshold;
  std::size_t timeout_ms = 30000;

  FieldConfig field_config() const;
  TrainConfig train_config() const;
  std::string to_json() const;
};

/// Overlays the keys of a flat JSON object onto `config`. Unknown keys or
/// wrongly typed values throw ConfigError.
void apply_json(RunConfig& config, const std::string& json_text);
void apply_file(RunConfig& config, const std::filesystem::path& path);

/// Resolves "remote" without a URL from MESHFIELD_BACKEND_URL.
std::string resolve_backend(const std::string& backend);

}  // namespace meshfield::cli
