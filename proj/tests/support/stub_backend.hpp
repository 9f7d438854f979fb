#pragma once

// Non-differentiable backend with scripted similarities.
//
// Text embeddings are e1. The i-th image embedded since the last reset() maps to
// s_i * e1 + sqrt(1 - s_i^2) * e2, so its cosine to any text is exactly s_i.

#include <atomic>
#include <functional>
#include <vector>

#include "meshfield/embed.hpp"

namespace meshfield::testing {

class ScriptedBackend final : public EmbeddingBackend {
 public:
  explicit ScriptedBackend(std::vector<double> similarities, std::size_t dim = 16, std::size_t input_size = 64);

  std::string name() const override { return "scripted"; }
  std::size_t dim() const override { return dim_; }
  bool differentiable() const override { return false; }
  std::size_t input_size() const override { return input_size_; }

  ag::Tensor embed_text(std::string_view text) const override;
  ag::Tensor embed_image(const ag::Tensor& image) const override;

  void reset() { calls_ = 0; }
  std::size_t calls() const { return calls_; }
  /// Image calls whose index is listed here throw BackendError.
  std::vector<std::size_t> failing_calls;

 private:
  std::vector<double> similarities_;
  std::size_t dim_;
  std::size_t input_size_;
  mutable std::atomic<std::size_t> calls_{0};
};

/// The unit vector with cosine `s` to e1 (in the e1/e2 plane).
std::vector<double> vector_with_similarity(double s, std::size_t dim);

}  // namespace meshfield::testing
