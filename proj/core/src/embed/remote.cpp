#include <httplib.h>

#include <cmath>
#include <json.hpp>
#include <mutex>

#include "meshfield/embed.hpp"
#include "meshfield/errors.hpp"
#include "meshfield/render.hpp"

namespace meshfield {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("remote backend: URL needs a scheme: " + url);
  if (url.compare(0, scheme, "http") != 0) throw ConfigError("remote backend: only http URLs are supported: " + url);
  const auto slash = url.find('/', scheme + 3);
  ParsedUrl out;
  out.origin = url.substr(0, slash);
  if (slash != std::string::npos) {
    out.prefix = url.substr(slash);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  }
  return out;
}

}  // namespace

struct RemoteBackend::Client {
  Client(const ParsedUrl& url, std::chrono::milliseconds timeout) : http(url.origin), prefix(url.prefix) {
    http.set_connection_timeout(timeout);
    http.set_read_timeout(timeout);
    http.set_write_timeout(timeout);
  }
  httplib::Client http;
  std::string prefix;
  std::mutex mutex;
};

RemoteBackend::RemoteBackend(RemoteOptions options) : options_(std::move(options)) {
  client_ = std::make_unique<Client>(parse_url(options_.url), options_.timeout);
  httplib::Result res;
  {
    std::lock_guard lock(client_->mutex);
    res = client_->http.Get(client_->prefix + "/health");
  }
  if (!res) {
    throw BackendError("remote backend at " + options_.url + " is unreachable: " + httplib::to_string(res.error()), 0,
                       1);
  }
  if (res->status != 200) {
    throw BackendError("remote backend at " + options_.url + ": /health returned HTTP " + std::to_string(res->status),
                       res->status, 1);
  }
  nlohmann::json health;
  try {
    health = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw BackendError("remote backend at " + options_.url + ": malformed /health response: " + e.what(), res->status,
                       1);
  }
  const auto dim = health.value("dim", std::size_t{0});
  if (dim != options_.dim) {
    throw ConfigError("remote backend at " + options_.url + " reports dim " + std::to_string(dim) + ", expected " +
                      std::to_string(options_.dim));
  }
  model_ = health.value("model", std::string{});
}

RemoteBackend::~RemoteBackend() = default;

std::string RemoteBackend::name() const { return model_.empty() ? "remote" : "remote:" + model_; }

std::string RemoteBackend::post(const std::string& path, const std::string& body) const {
  const int attempts = std::max(1, options_.retries + 1);
  std::string last;
  int last_status = 0;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    httplib::Result res;
    {
      std::lock_guard lock(client_->mutex);
      res = client_->http.Post(client_->prefix + path, body, "application/json");
    }
    if (!res) {
      last = httplib::to_string(res.error());
      last_status = 0;
      continue;
    }
    if (res->status == 200) return res->body;
    last_status = res->status;
    last = "HTTP " + std::to_string(res->status);
    if (res->status < 500) {
      throw BackendError("remote backend " + path + " failed: " + last + " " + res->body, res->status, attempt);
    }
  }
  throw BackendError("remote backend " + path + " at " + options_.url + " failed after " + std::to_string(attempts) +
                         " attempts: " + last,
                     last_status, attempts);
}

std::vector<ag::Tensor> RemoteBackend::parse_embeddings(const std::string& body, std::size_t expected) const {
  std::vector<ag::Tensor> out;
  try {
    const auto j = nlohmann::json::parse(body);
    const auto& rows = j.at("embeddings");
    if (rows.size() != expected) {
      throw BackendError("remote backend returned " + std::to_string(rows.size()) + " embeddings, expected " +
                         std::to_string(expected), 200);
    }
    for (const auto& row : rows) {
      auto v = row.get<std::vector<double>>();
      if (v.size() != options_.dim) {
        throw BackendError("remote backend returned an embedding of width " + std::to_string(v.size()) +
                           ", expected " + std::to_string(options_.dim), 200);
      }
      // Guard the unit-norm contract against float32 round-off on the service side.
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm == 0.0) throw BackendError("remote backend returned a zero embedding", 200);
      for (auto& x : v) x /= norm;
      out.push_back(ag::Tensor::from_vector({1, options_.dim}, std::move(v)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("remote backend: malformed response: ") + e.what(), 200);
  }
  return out;
}

std::vector<ag::Tensor> RemoteBackend::embed_texts(std::span<const std::string> texts) const {
  std::vector<ag::Tensor> out;
  for (const auto& t : texts)
    if (t.empty()) throw InputError("embed_text: empty text");
  for (std::size_t begin = 0; begin < texts.size(); begin += kMaxTextBatch) {
    const std::size_t end = std::min(texts.size(), begin + kMaxTextBatch);
    nlohmann::json req;
    req["texts"] = std::vector<std::string>(texts.begin() + begin, texts.begin() + end);
    auto part = parse_embeddings(post("/embed/text", req.dump()), end - begin);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

ag::Tensor RemoteBackend::embed_text(std::string_view text) const {
  const std::string t(text);
  return embed_texts(std::span<const std::string>(&t, 1)).front();
}

std::vector<ag::Tensor> RemoteBackend::embed_images(std::span<const ag::Tensor> images) const {
  std::vector<ag::Tensor> out;
  for (std::size_t begin = 0; begin < images.size(); begin += kMaxImageBatch) {
    const std::size_t end = std::min(images.size(), begin + kMaxImageBatch);
    nlohmann::json req;
    req["images"] = nlohmann::json::array();
    for (std::size_t i = begin; i < end; ++i) {
      const auto png = encode_png(images[i]);
      req["images"].push_back(httplib::detail::base64_encode(std::string(png.begin(), png.end())));
    }
    auto part = parse_embeddings(post("/embed/image", req.dump()), end - begin);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

ag::Tensor RemoteBackend::embed_image(const ag::Tensor& image) const {
  return embed_images(std::span<const ag::Tensor>(&image, 1)).front();
}

}  // namespace meshfield
