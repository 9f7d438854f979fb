#include <algorithm>

#include "meshfield/bench.hpp"
#include "meshfield/errors.hpp"

namespace meshfield {

std::string apply_prompt_template(std::string_view subject) {
  std::string out(kPromptTemplate);
  out.replace(out.find("{}"), 2, subject);
  return out;
}

MesResult mes_views(const StylizedMesh& mesh, const ag::Tensor& text_embedding, const EmbeddingBackend& backend,
                    std::size_t image_size, const RenderSettings& settings) {
  ag::NoGradGuard guard;
  const auto cameras = evaluation_cameras(image_size);
  MesResult result;
  std::vector<std::size_t> failed;
  std::string first_error;
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    const auto image = resize_square(render(mesh, cameras[i], settings).image, backend.input_size());
    try {
      const auto emb = backend.embed_image(image);
      result.per_view.push_back(ag::cosine_sim(emb, text_embedding).item());
    } catch (const BackendError& e) {
      if (failed.empty()) first_error = e.what();
      failed.push_back(i);
    }
  }
  if (!failed.empty()) {
    std::string list;
    for (auto i : failed) list += (list.empty() ? "" : ",") + std::to_string(i);
    throw PartialResultError("mes: backend failed on views [" + list + "]: " + first_error, failed);
  }
  double sum = 0.0;
  for (double s : result.per_view) sum += s;
  result.score = sum / static_cast<double>(result.per_view.size());
  return result;
}

double mes(const StylizedMesh& mesh, std::string_view prompt, const EmbeddingBackend& backend, std::size_t image_size,
           const RenderSettings& settings) {
  const auto text = backend.embed_text(prompt);
  return mes_views(mesh, text, backend, image_size, settings).score;
}

std::size_t its(std::span<const std::pair<std::size_t, double>> curve, double threshold, std::size_t cap,
                std::size_t cap_value) {
  if (curve.empty()) throw InputError("its: empty curve");
  std::size_t best = cap_value;
  bool found = false;
  for (const auto& [iteration, score] : curve) {
    if (iteration > cap || score < threshold) continue;
    if (!found || iteration < best) best = iteration;
    found = true;
  }
  return best;
}

}  // namespace meshfield
