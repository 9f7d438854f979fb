#include "fake_sidecar.hpp"

#include <httplib.h>

#include <json.hpp>

#include "meshfield/render.hpp"
#include "stub_backend.hpp"

namespace meshfield::testing {

std::string base64_decode(const std::string& in) {
  static const std::string chars = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  int val = 0, bits = -8;
  for (char c : in) {
    if (c == '=') break;
    const auto pos = chars.find(c);
    if (pos == std::string::npos) throw std::invalid_argument("bad base64");
    val = (val << 6) + static_cast<int>(pos);
    bits += 6;
    if (bits >= 0) {
      out.push_back(static_cast<char>((val >> bits) & 0xFF));
      bits -= 8;
    }
  }
  return out;
}

FakeSidecar::FakeSidecar(FakeSidecarOptions options)
    : options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  failures_left_ = options_.fail_count;
  if (!options_.text) {
    const auto dim = options_.dim;
    options_.text = [dim](const std::string&) { return vector_with_similarity(1.0, dim); };
  }
  if (!options_.image) {
    const auto dim = options_.dim;
    const double s = options_.image_similarity;
    options_.image = [dim, s](const ag::Tensor&) { return vector_with_similarity(s, dim); };
  }

  auto reply = [this](httplib::Response& res, const std::vector<std::vector<double>>& rows) {
    nlohmann::json j = {{"embeddings", rows}, {"dim", options_.dim}, {"model", options_.model}};
    res.set_content(j.dump(), "application/json");
  };
  auto fail_if_scripted = [this](httplib::Response& res) {
    if (failures_left_.fetch_sub(1) > 0) {
      res.status = options_.fail_status;
      res.set_content(R"({"error":"scripted failure"})", "application/json");
      return true;
    }
    return false;
  };

  server_->Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    ++health_calls;
    nlohmann::json j = {{"status", "ok"}, {"dim", options_.dim}, {"model", options_.model}};
    res.set_content(j.dump(), "application/json");
  });
  server_->Post("/embed/text", [this, reply, fail_if_scripted](const httplib::Request& req, httplib::Response& res) {
    ++text_calls;
    if (fail_if_scripted(res)) return;
    nlohmann::json j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.contains("texts") || !j["texts"].is_array() || j["texts"].empty()) {
      res.status = 400;
      return;
    }
    if (j["texts"].size() > 64) {
      res.status = 413;
      return;
    }
    std::vector<std::vector<double>> rows;
    for (const auto& t : j["texts"]) rows.push_back(options_.text(t.get<std::string>()));
    reply(res, rows);
  });
  server_->Post("/embed/image", [this, reply, fail_if_scripted](const httplib::Request& req, httplib::Response& res) {
    ++image_calls;
    if (fail_if_scripted(res)) return;
    nlohmann::json j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.contains("images") || !j["images"].is_array() || j["images"].empty()) {
      res.status = 400;
      return;
    }
    if (j["images"].size() > 32) {
      res.status = 413;
      return;
    }
    std::vector<std::vector<double>> rows;
    try {
      for (const auto& b64 : j["images"]) {
        const auto bytes = base64_decode(b64.get<std::string>());
        const auto image =
            decode_png(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
        ++images_received;
        rows.push_back(options_.image(image));
      }
    } catch (const std::exception&) {
      res.status = 400;
      return;
    }
    reply(res, rows);
  });

  port_ = server_->bind_to_any_port("127.0.0.1");
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

FakeSidecar::~FakeSidecar() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string FakeSidecar::url() const { return "http://127.0.0.1:" + std::to_string(port_); }

}  // namespace meshfield::testing
