#include <cctype>
#include <cmath>
#include <random>

#include "meshfield/embed.hpp"
#include "meshfield/errors.hpp"
#include "meshfield/hash.hpp"

namespace meshfield {

namespace {

struct BinTap {
  std::size_t index;
  double weight;
};

// Area-average weights from `in` samples onto `out` bins.
std::vector<std::vector<BinTap>> pool_weights(std::size_t in, std::size_t out) {
  std::vector<std::vector<BinTap>> bins(out);
  const double width = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t b = 0; b < out; ++b) {
    const double lo = b * width, hi = (b + 1) * width;
    for (auto i = static_cast<std::size_t>(std::floor(lo)); i < in && static_cast<double>(i) < hi; ++i) {
      const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      if (overlap > 0.0) bins[b].push_back({i, overlap / width});
    }
  }
  return bins;
}

// H x W x 3 -> 1 x (32 * 32 * 3), differentiable.
ag::Tensor area_pool(const ag::Tensor& image, std::size_t size) {
  const std::size_t H = image.dim(0), W = image.dim(1);
  auto wy = std::make_shared<std::vector<std::vector<BinTap>>>(pool_weights(H, size));
  auto wx = std::make_shared<std::vector<std::vector<BinTap>>>(pool_weights(W, size));
  auto in = image.data();
  std::vector<double> out(size * size * 3, 0.0);
  for (std::size_t p = 0; p < size; ++p)
    for (std::size_t q = 0; q < size; ++q)
      for (const auto& ty : (*wy)[p])
        for (const auto& tx : (*wx)[q]) {
          const double w = ty.weight * tx.weight;
          const double* px = &in[(ty.index * W + tx.index) * 3];
          double* o = &out[(p * size + q) * 3];
          for (int c = 0; c < 3; ++c) o[c] += w * px[c];
        }
  return ag::make_op(
      {1, size * size * 3}, std::move(out), {image},
      [wy, wx, size, W](std::span<const double> g, const ag::GradSlots& slots) {
        auto& gi = *slots[0];
        for (std::size_t p = 0; p < size; ++p)
          for (std::size_t q = 0; q < size; ++q)
            for (const auto& ty : (*wy)[p])
              for (const auto& tx : (*wx)[q]) {
                const double w = ty.weight * tx.weight;
                const double* go = &g[(p * size + q) * 3];
                double* dst = &gi[(ty.index * W + tx.index) * 3];
                for (int c = 0; c < 3; ++c) dst[c] += w * go[c];
              }
      },
      "area_pool");
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

}  // namespace

ToyEmbedder::ToyEmbedder(std::size_t dim, std::uint64_t seed, std::size_t input_size)
    : dim_(dim), seed_(seed), input_size_(input_size) {
  if (dim == 0) throw ConfigError("toy embedder: dim must be positive");
  if (input_size < kPool) throw ConfigError("toy embedder: input size must be at least 32");
  const std::size_t in_dim = kPool * kPool * 3;
  std::mt19937_64 rng(seed ^ fnv1a("toy-image-projection"));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> proj(in_dim * dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (auto& v : proj) v = normal(rng) * scale;
  std::vector<double> bias(dim);
  double norm = 0.0;
  for (auto& v : bias) {
    v = normal(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : bias) v *= 0.01 / norm;
  projection_ = ag::Tensor::from_vector({in_dim, dim}, std::move(proj));
  bias_ = ag::Tensor::from_vector({1, dim}, std::move(bias));
}

std::vector<double> ToyEmbedder::token_vector(std::string_view token) const {
  std::mt19937_64 rng(seed_ ^ fnv1a(token));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim_);
  double norm = 0.0;
  for (auto& x : v) {
    x = normal(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

ag::Tensor ToyEmbedder::embed_text(std::string_view text) const {
  if (text.empty()) throw InputError("embed_text: empty text");
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw InputError("embed_text: text has no tokens");
  std::vector<double> mean(dim_, 0.0);
  for (const auto& t : tokens) {
    const auto v = token_vector(t);
    for (std::size_t i = 0; i < dim_; ++i) mean[i] += v[i];
  }
  double norm = 0.0;
  for (double x : mean) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw NumericDomainError("embed_text: token vectors cancel out");
  for (auto& x : mean) x /= norm;
  return ag::Tensor::from_vector({1, dim_}, std::move(mean));
}

ag::Tensor ToyEmbedder::embed_image(const ag::Tensor& image) const {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DimensionError("embed_image: expected H x W x 3, got " + ag::shape_str(image.shape()));
  }
  if (image.dim(0) < kPool || image.dim(1) < kPool) {
    throw DimensionError("embed_image: image must be at least 32 x 32, got " + ag::shape_str(image.shape()));
  }
  const auto pooled = area_pool(image, kPool) - 0.5;
  return ag::l2_normalize(ag::matmul(pooled, projection_) + bias_);
}

}  // namespace meshfield
