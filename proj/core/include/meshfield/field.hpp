#pragma once

// The neural style field: Fourier positional encoding, the text-guided dynamic
// attention module (two hypernetwork-driven MLPs producing channel and spatial
// attention maps) and the color / position heads.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "meshfield/autograd.hpp"
#include "meshfield/mesh.hpp"

namespace meshfield {

struct FieldConfig {
  std::size_t frequencies = 256;  // C; encoding width is 2C
  double sigma = 12.0;            // standard deviation of the frequency matrix
  std::size_t text_dim = 512;     // width of the conditioning embedding
  std::size_t rank = 30;          // K
  std::size_t reduction = 8;      // r
  std::size_t head_width = 256;
  /// Replace both attention maps by ones (static, text-independent baseline).
  bool ablate_tdam = false;
  /// Zero the last layer of both heads so the untrained field predicts no offsets.
  bool zero_init_heads = false;
  std::uint64_t seed = 0;
};

struct NamedTensor {
  std::string name;
  ag::Tensor tensor;
};

/// Fixed random Fourier features: [cos(2 pi B p), sin(2 pi B p)].
class FourierEncoder {
 public:
  FourierEncoder(std::size_t frequencies, double sigma, std::mt19937_64& rng);
  explicit FourierEncoder(ag::Tensor frequency_matrix);

  ag::Tensor encode(const ag::Tensor& points) const;
  std::size_t output_dim() const { return 2 * frequencies_.dim(0); }
  const ag::Tensor& frequency_matrix() const { return frequencies_; }
  ag::Tensor& frequency_matrix() { return frequencies_; }

 private:
  ag::Tensor frequencies_;  // C x 3, never trained
};

/// Dense parameter count of a hypernetwork that emits all (D_in+1) x D_out weights directly.
std::size_t naive_param_count(std::size_t text_dim, std::size_t in_dim, std::size_t out_dim);
/// Parameter count of the low-rank generator: (D_t+1)(D_in+1)K + K D_out.
std::size_t decomposed_param_count(std::size_t text_dim, std::size_t in_dim, std::size_t out_dim, std::size_t rank);

/// Weights of one dynamic layer generated for a particular conditioning vector.
struct GeneratedLayer {
  ag::Tensor generator;  // U, (D_in+1) x K
  ag::Tensor combined;   // M_d = U V, (D_in+1) x D_out
  ag::Tensor weight;     // W_t, D_in x D_out
  ag::Tensor bias;       // b_t, 1 x D_out
};

/// Affine layer whose weights are produced from a conditioning embedding via U(F_t) V.
///
/// U is the row-major reshape of F_t W_l + b_l into (D_in+1) x K; the first
/// D_in rows of U V form the weight and the last row the bias.
class DynamicLinear {
 public:
  DynamicLinear(std::size_t text_dim, std::size_t in_dim, std::size_t out_dim, std::size_t rank,
                std::mt19937_64& rng);

  GeneratedLayer generate(const ag::Tensor& text) const;
  ag::Tensor forward(const ag::Tensor& text, const ag::Tensor& x) const;
  ag::Tensor forward(const GeneratedLayer& layer, const ag::Tensor& x) const;

  std::size_t text_dim() const { return text_dim_; }
  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }
  std::size_t rank() const { return rank_; }
  std::size_t trainable_count() const;

  ag::Tensor& text_weight() { return text_weight_; }
  ag::Tensor& text_bias() { return text_bias_; }
  ag::Tensor& basis() { return basis_; }
  const ag::Tensor& basis() const { return basis_; }

  void append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;

 private:
  std::size_t text_dim_, in_dim_, out_dim_, rank_;
  ag::Tensor text_weight_;  // W_l, D_t x (D_in+1)K
  ag::Tensor text_bias_;    // b_l, 1 x (D_in+1)K
  ag::Tensor basis_;        // V, K x D_out
};

/// Two dynamic layers separated by ReLU; width -> width/r -> width.
class DynamicMLP {
 public:
  DynamicMLP(std::size_t text_dim, std::size_t width, std::size_t reduction, std::size_t rank, std::mt19937_64& rng);

  ag::Tensor forward(const ag::Tensor& text, const ag::Tensor& x) const;

  DynamicLinear& first() { return first_; }
  DynamicLinear& second() { return second_; }
  const DynamicLinear& first() const { return first_; }
  const DynamicLinear& second() const { return second_; }
  std::size_t hidden_dim() const { return first_.out_dim(); }
  void append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;

 private:
  DynamicLinear first_;
  DynamicLinear second_;
};

/// Static affine layer, weight stored in x out.
struct Linear {
  ag::Tensor weight;
  ag::Tensor bias;

  Linear(std::size_t in_dim, std::size_t out_dim, std::mt19937_64& rng);
  ag::Tensor forward(const ag::Tensor& x) const { return ag::matmul(x, weight) + bias; }
};

/// Linear - ReLU - Linear - ReLU - Linear.
struct HeadMLP {
  std::vector<Linear> layers;

  HeadMLP(std::size_t in_dim, std::size_t width, std::size_t out_dim, std::mt19937_64& rng);
  ag::Tensor forward(const ag::Tensor& x) const;
  void append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void zero_output_layer();
};

struct AttentionResult {
  ag::Tensor map;       // 1 x D_v (channel) or N_v x 1 (spatial)
  ag::Tensor features;  // input scaled by the map
};

struct Offsets {
  ag::Tensor color;     // N x 3, in (-0.5, 0.5)
  ag::Tensor position;  // N x 3, row norm <= 0.1
};

class StyleField {
 public:
  explicit StyleField(const FieldConfig& config);

  const FieldConfig& config() const { return config_; }
  const FourierEncoder& encoder() const { return encoder_; }

  AttentionResult channel_attention(const ag::Tensor& features, const ag::Tensor& text) const;
  AttentionResult spatial_attention(const ag::Tensor& features, const ag::Tensor& text) const;
  /// Positional encoding followed by channel then spatial attention (identity when ablated).
  ag::Tensor vertex_features(const ag::Tensor& points, const ag::Tensor& text) const;
  Offsets predict_offsets(const Mesh& mesh, const ag::Tensor& text) const;

  DynamicMLP& channel_mlp() { return eta_channel_; }
  DynamicMLP& spatial_mlp() { return eta_spatial_; }
  HeadMLP& color_head() { return color_head_; }
  HeadMLP& position_head() { return position_head_; }
  const DynamicMLP& channel_mlp() const { return eta_channel_; }
  const DynamicMLP& spatial_mlp() const { return eta_spatial_; }

  /// Tensors the optimizer updates. Attention parameters are left out when ablated.
  std::vector<NamedTensor> trainable_parameters() const;
  /// Every tensor needed to restore the field, including the fixed frequency matrix.
  std::vector<NamedTensor> state() const;

 private:
  void check_text(const ag::Tensor& text) const;

  FieldConfig config_;
  std::mt19937_64 rng_;
  FourierEncoder encoder_;
  DynamicMLP eta_channel_;
  DynamicMLP eta_spatial_;
  HeadMLP color_head_;
  HeadMLP position_head_;
};

struct CheckpointInfo {
  std::uint32_t version = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes all field tensors to `path` atomically (temp file + rename).
void save_checkpoint(const StyleField& field, const std::filesystem::path& path, std::uint64_t seed,
                     const std::string& config_hash);
/// Restores tensors by name; shapes must match the field's configuration.
CheckpointInfo load_checkpoint(StyleField& field, const std::filesystem::path& path);

}  // namespace meshfield
