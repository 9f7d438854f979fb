#include "meshfield/field.hpp"

#include <cmath>
#include <numbers>

#include "meshfield/errors.hpp"

namespace meshfield {

namespace {

ag::Tensor uniform(ag::Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(ag::numel(shape));
  for (auto& x : v) x = dist(rng);
  return ag::Tensor::from_vector(std::move(shape), std::move(v), true);
}

// Kaiming-style fan-in bound.
double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

ag::Tensor as_row(const ag::Tensor& text) {
  if (text.rank() == 2 && text.dim(0) == 1) return text;
  return ag::reshape(text, {1, text.numel()});
}

}  // namespace

FourierEncoder::FourierEncoder(std::size_t frequencies, double sigma, std::mt19937_64& rng) {
  if (frequencies == 0) throw ConfigError("FourierEncoder: need at least one frequency");
  std::normal_distribution<double> dist(0.0, sigma);
  std::vector<double> b(frequencies * 3);
  for (auto& x : b) x = dist(rng);
  frequencies_ = ag::Tensor::from_vector({frequencies, 3}, std::move(b));
}

FourierEncoder::FourierEncoder(ag::Tensor frequency_matrix) : frequencies_(std::move(frequency_matrix)) {
  if (frequencies_.rank() != 2 || frequencies_.dim(1) != 3) {
    throw DimensionError("FourierEncoder: frequency matrix must be C x 3");
  }
}

ag::Tensor FourierEncoder::encode(const ag::Tensor& points) const {
  if (points.rank() != 2 || points.dim(1) != 3) {
    throw DimensionError("encode: points must be N x 3, got " + ag::shape_str(points.shape()));
  }
  auto phase = ag::matmul(points, ag::transpose(frequencies_)) * (2.0 * std::numbers::pi);
  return ag::concat_cols(ag::cos(phase), ag::sin(phase));
}

std::size_t naive_param_count(std::size_t text_dim, std::size_t in_dim, std::size_t out_dim) {
  return (text_dim + 1) * (in_dim + 1) * out_dim;
}

std::size_t decomposed_param_count(std::size_t text_dim, std::size_t in_dim, std::size_t out_dim, std::size_t rank) {
  return (text_dim + 1) * (in_dim + 1) * rank + rank * out_dim;
}

DynamicLinear::DynamicLinear(std::size_t text_dim, std::size_t in_dim, std::size_t out_dim, std::size_t rank,
                             std::mt19937_64& rng)
    : text_dim_(text_dim), in_dim_(in_dim), out_dim_(out_dim), rank_(rank) {
  if (text_dim == 0 || in_dim == 0 || out_dim == 0 || rank == 0) {
    throw ConfigError("DynamicLinear: all dimensions must be positive");
  }
  const std::size_t flat = (in_dim + 1) * rank;
  text_weight_ = uniform({text_dim, flat}, fan_in_bound(text_dim), rng);
  text_bias_ = ag::Tensor::zeros({1, flat}, true);
  basis_ = uniform({rank, out_dim}, fan_in_bound(rank), rng);
}

std::size_t DynamicLinear::trainable_count() const {
  return text_weight_.numel() + text_bias_.numel() + basis_.numel();
}

GeneratedLayer DynamicLinear::generate(const ag::Tensor& text) const {
  const auto row = as_row(text);
  if (row.dim(1) != text_dim_) {
    throw DimensionError("DynamicLinear: conditioning has " + std::to_string(row.dim(1)) + " entries, expected " +
                         std::to_string(text_dim_));
  }
  GeneratedLayer out;
  out.generator = ag::reshape(ag::matmul(row, text_weight_) + text_bias_, {in_dim_ + 1, rank_});
  out.combined = ag::matmul(out.generator, basis_);
  out.weight = ag::slice_rows(out.combined, 0, in_dim_);
  out.bias = ag::slice_rows(out.combined, in_dim_, in_dim_ + 1);
  return out;
}

ag::Tensor DynamicLinear::forward(const GeneratedLayer& layer, const ag::Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_dim_) {
    throw DimensionError("DynamicLinear: input " + ag::shape_str(x.shape()) + " does not have " +
                         std::to_string(in_dim_) + " columns");
  }
  return ag::matmul(x, layer.weight) + layer.bias;
}

ag::Tensor DynamicLinear::forward(const ag::Tensor& text, const ag::Tensor& x) const {
  return forward(generate(text), x);
}

void DynamicLinear::append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".W_l", text_weight_});
  out.push_back({prefix + ".b_l", text_bias_});
  out.push_back({prefix + ".V", basis_});
}

namespace {
std::size_t hidden_width(std::size_t width, std::size_t reduction) {
  if (reduction == 0 || width % reduction != 0) {
    throw ConfigError("DynamicMLP: width " + std::to_string(width) + " is not divisible by reduction " +
                      std::to_string(reduction));
  }
  return width / reduction;
}
}  // namespace

DynamicMLP::DynamicMLP(std::size_t text_dim, std::size_t width, std::size_t reduction, std::size_t rank,
                       std::mt19937_64& rng)
    : first_(text_dim, width, hidden_width(width, reduction), rank, rng),
      second_(text_dim, width / reduction, width, rank, rng) {}

ag::Tensor DynamicMLP::forward(const ag::Tensor& text, const ag::Tensor& x) const {
  return second_.forward(text, ag::relu(first_.forward(text, x)));
}

void DynamicMLP::append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  first_.append_parameters(prefix + ".0", out);
  second_.append_parameters(prefix + ".1", out);
}

Linear::Linear(std::size_t in_dim, std::size_t out_dim, std::mt19937_64& rng)
    : weight(uniform({in_dim, out_dim}, fan_in_bound(in_dim), rng)),
      bias(uniform({1, out_dim}, fan_in_bound(in_dim), rng)) {}

HeadMLP::HeadMLP(std::size_t in_dim, std::size_t width, std::size_t out_dim, std::mt19937_64& rng) {
  layers.emplace_back(in_dim, width, rng);
  layers.emplace_back(width, width, rng);
  layers.emplace_back(width, out_dim, rng);
}

ag::Tensor HeadMLP::forward(const ag::Tensor& x) const {
  ag::Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(h);
    if (i + 1 < layers.size()) h = ag::relu(h);
  }
  return h;
}

void HeadMLP::append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.push_back({prefix + "." + std::to_string(i) + ".weight", layers[i].weight});
    out.push_back({prefix + "." + std::to_string(i) + ".bias", layers[i].bias});
  }
}

void HeadMLP::zero_output_layer() {
  for (auto& v : layers.back().weight.data_mut()) v = 0.0;
  for (auto& v : layers.back().bias.data_mut()) v = 0.0;
}

StyleField::StyleField(const FieldConfig& config)
    : config_(config),
      rng_(config.seed),
      encoder_(config.frequencies, config.sigma, rng_),
      eta_channel_(config.text_dim, 2 * config.frequencies, config.reduction, config.rank, rng_),
      eta_spatial_(config.text_dim, 2 * config.frequencies, config.reduction, config.rank, rng_),
      color_head_(2 * config.frequencies, config.head_width, 3, rng_),
      position_head_(2 * config.frequencies, config.head_width, 3, rng_) {
  if (config.zero_init_heads) {
    color_head_.zero_output_layer();
    position_head_.zero_output_layer();
  }
}

void StyleField::check_text(const ag::Tensor& text) const {
  if (text.numel() != config_.text_dim) {
    throw DimensionError("StyleField: conditioning has " + std::to_string(text.numel()) + " entries, expected " +
                         std::to_string(config_.text_dim));
  }
}

AttentionResult StyleField::channel_attention(const ag::Tensor& features, const ag::Tensor& text) const {
  check_text(text);
  if (features.rank() != 2 || features.dim(1) != encoder_.output_dim()) {
    throw DimensionError("channel_attention: features " + ag::shape_str(features.shape()) + " do not have " +
                         std::to_string(encoder_.output_dim()) + " channels");
  }
  AttentionResult r;
  r.map = ag::sigmoid(ag::reduce_mean(eta_channel_.forward(text, features), 0));
  r.features = features * r.map;
  return r;
}

AttentionResult StyleField::spatial_attention(const ag::Tensor& features, const ag::Tensor& text) const {
  check_text(text);
  if (features.rank() != 2 || features.dim(1) != encoder_.output_dim()) {
    throw DimensionError("spatial_attention: features " + ag::shape_str(features.shape()) + " do not have " +
                         std::to_string(encoder_.output_dim()) + " channels");
  }
  AttentionResult r;
  r.map = ag::sigmoid(ag::reduce_mean(eta_spatial_.forward(text, features), 1));
  r.features = features * r.map;
  return r;
}

ag::Tensor StyleField::vertex_features(const ag::Tensor& points, const ag::Tensor& text) const {
  auto encoded = encoder_.encode(points);
  if (config_.ablate_tdam) return encoded;
  auto channel = channel_attention(encoded, text);
  return spatial_attention(channel.features, text).features;
}

Offsets StyleField::predict_offsets(const Mesh& mesh, const ag::Tensor& text) const {
  check_text(text);
  auto features = vertex_features(mesh.positions_tensor(), text);
  Offsets out;
  out.color = ag::tanh(color_head_.forward(features)) * 0.5;
  out.position = ag::clamp_row_norm(ag::tanh(position_head_.forward(features)) * kMaxOffsetNorm, kMaxOffsetNorm);
  return out;
}

std::vector<NamedTensor> StyleField::trainable_parameters() const {
  std::vector<NamedTensor> out;
  if (!config_.ablate_tdam) {
    eta_channel_.append_parameters("tdam.channel", out);
    eta_spatial_.append_parameters("tdam.spatial", out);
  }
  color_head_.append_parameters("head.color", out);
  position_head_.append_parameters("head.position", out);
  return out;
}

std::vector<NamedTensor> StyleField::state() const {
  std::vector<NamedTensor> out;
  out.push_back({"encoder.B", encoder_.frequency_matrix()});
  eta_channel_.append_parameters("tdam.channel", out);
  eta_spatial_.append_parameters("tdam.spatial", out);
  color_head_.append_parameters("head.color", out);
  position_head_.append_parameters("head.position", out);
  return out;
}

}  // namespace meshfield
