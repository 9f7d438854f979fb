#include <cstdlib>

#include "meshfield/embed.hpp"
#include "meshfield/errors.hpp"

namespace meshfield {

std::vector<ag::Tensor> EmbeddingBackend::embed_images(std::span<const ag::Tensor> images) const {
  std::vector<ag::Tensor> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(embed_image(img));
  return out;
}

std::unique_ptr<EmbeddingBackend> make_backend(const std::string& spec, std::size_t dim, std::uint64_t seed) {
  if (spec == "toy") return std::make_unique<ToyEmbedder>(dim, seed);
  if (spec == "remote" || spec.rfind("remote:", 0) == 0) {
    RemoteOptions opts;
    opts.dim = dim;
    if (spec.size() > 7) {
      opts.url = spec.substr(7);
    } else if (const char* env = std::getenv("MESHFIELD_BACKEND_URL"); env && *env) {
      opts.url = env;
    } else {
      throw ConfigError("backend 'remote' needs a URL (remote:URL or MESHFIELD_BACKEND_URL)");
    }
    return std::make_unique<RemoteBackend>(opts);
  }
  throw ConfigError("unknown backend '" + spec + "' (expected toy or remote:URL)");
}

void require_differentiable(const EmbeddingBackend& backend) {
  if (!backend.differentiable()) throw ContractError("non-differentiable backend: " + backend.name());
}

ag::Tensor mean_view_embedding(const EmbeddingBackend& backend, std::span<const ag::Tensor> views) {
  if (views.empty()) throw InputError("mean_view_embedding: no views");
  const auto embeddings = backend.embed_images(views);
  ag::Tensor acc = embeddings.front();
  for (std::size_t i = 1; i < embeddings.size(); ++i) acc = acc + embeddings[i];
  return acc * (1.0 / static_cast<double>(embeddings.size()));
}

ag::Tensor clip_style_loss(const ag::Tensor& phi_color, const ag::Tensor& phi_gray, const ag::Tensor& target) {
  if (phi_color.shape() != target.shape() || phi_gray.shape() != target.shape()) {
    throw DimensionError("clip_style_loss: shapes " + ag::shape_str(phi_color.shape()) + ", " +
                         ag::shape_str(phi_gray.shape()) + " and " + ag::shape_str(target.shape()) + " differ");
  }
  return -(ag::cosine_sim(phi_color, target) + ag::cosine_sim(phi_gray, target));
}

}  // namespace meshfield
