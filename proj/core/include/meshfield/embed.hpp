#pragma once

// Text and image embedding backends.

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "meshfield/autograd.hpp"

namespace meshfield {

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  /// True when embed_image records gradients with respect to the input pixels.
  virtual bool differentiable() const = 0;
  /// Side length of the square images the backend expects.
  virtual std::size_t input_size() const = 0;

  /// Unit vector, shape 1 x dim. Empty text throws InputError.
  virtual ag::Tensor embed_text(std::string_view text) const = 0;
  /// Unit vector, shape 1 x dim, for an H x W x 3 image with values in [0, 1].
  virtual ag::Tensor embed_image(const ag::Tensor& image) const = 0;
  /// One embedding per image. The default calls embed_image in order.
  virtual std::vector<ag::Tensor> embed_images(std::span<const ag::Tensor> images) const;
};

/// Deterministic differentiable stand-in encoder.
///
/// Text: lowercase, split on any character that is not a letter or digit,
/// map each token to a unit normal vector drawn from a generator seeded with
/// seed ^ fnv1a(token), average, normalize.
///
/// Image: area-average pool to 32 x 32 x 3, flatten in row-major HWC order,
/// subtract 0.5, project with a fixed N(0, 1/3072) matrix, add a fixed bias of
/// norm 0.01, normalize.
class ToyEmbedder final : public EmbeddingBackend {
 public:
  static constexpr std::size_t kPool = 32;

  explicit ToyEmbedder(std::size_t dim = 512, std::uint64_t seed = 0, std::size_t input_size = 64);

  std::string name() const override { return "toy"; }
  std::size_t dim() const override { return dim_; }
  bool differentiable() const override { return true; }
  std::size_t input_size() const override { return input_size_; }
  std::uint64_t seed() const { return seed_; }

  ag::Tensor embed_text(std::string_view text) const override;
  ag::Tensor embed_image(const ag::Tensor& image) const override;

  /// The unit vector assigned to a single (already lowercased) token.
  std::vector<double> token_vector(std::string_view token) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  std::size_t input_size_;
  ag::Tensor projection_;  // 3072 x dim
  ag::Tensor bias_;        // 1 x dim
};

struct RemoteOptions {
  std::string url;
  std::size_t dim = 512;
  std::chrono::milliseconds timeout{30000};
  int retries = 2;
  std::size_t input_size = 224;
};

/// Client for the embedding sidecar service:
///   GET  /health       -> {status, dim, model}
///   POST /embed/text   {texts: [...]}        -> {embeddings, dim, model}
///   POST /embed/image  {images: [base64 PNG]} -> {embeddings, dim, model}
/// Construction checks /health; a dim mismatch throws ConfigError, an
/// unreachable service throws BackendError naming the URL.
class RemoteBackend final : public EmbeddingBackend {
 public:
  static constexpr std::size_t kMaxTextBatch = 64;
  static constexpr std::size_t kMaxImageBatch = 32;

  explicit RemoteBackend(RemoteOptions options);
  ~RemoteBackend() override;

  std::string name() const override;
  std::size_t dim() const override { return options_.dim; }
  bool differentiable() const override { return false; }
  std::size_t input_size() const override { return options_.input_size; }
  const std::string& model() const { return model_; }

  ag::Tensor embed_text(std::string_view text) const override;
  std::vector<ag::Tensor> embed_texts(std::span<const std::string> texts) const;
  ag::Tensor embed_image(const ag::Tensor& image) const override;
  std::vector<ag::Tensor> embed_images(std::span<const ag::Tensor> images) const override;

 private:
  struct Client;
  std::string post(const std::string& path, const std::string& body) const;
  std::vector<ag::Tensor> parse_embeddings(const std::string& body, std::size_t expected) const;

  RemoteOptions options_;
  std::string model_;
  std::unique_ptr<Client> client_;
};

/// Builds a backend from "toy" or "remote:URL".
std::unique_ptr<EmbeddingBackend> make_backend(const std::string& spec, std::size_t dim, std::uint64_t seed);

/// Throws ContractError("non-differentiable backend") unless the backend can be trained through.
void require_differentiable(const EmbeddingBackend& backend);

/// Mean of the per-view image embeddings (not re-normalized).
ag::Tensor mean_view_embedding(const EmbeddingBackend& backend, std::span<const ag::Tensor> views);

/// -cos(phi_color, target) - cos(phi_gray, target).
ag::Tensor clip_style_loss(const ag::Tensor& phi_color, const ag::Tensor& phi_gray, const ag::Tensor& target);

}  // namespace meshfield
