#include <fstream>
#include <json.hpp>
#include <sstream>

#include "meshfield/bench.hpp"
#include "meshfield/errors.hpp"

namespace meshfield {

BenchmarkManifest parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: invalid JSON: ") + e.what());
  }
  if (!j.is_array()) throw FormatError("manifest: expected a JSON list of entries");
  BenchmarkManifest m;
  m.base_dir = base_dir;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    const std::string where = "manifest entry " + std::to_string(i);
    if (!e.is_object()) throw FormatError(where + ": expected an object");
    if (!e.contains("mesh") || !e["mesh"].is_string() || e["mesh"].get<std::string>().empty()) {
      throw FormatError(where + ": missing \"mesh\"");
    }
    ManifestEntry entry;
    entry.mesh = e["mesh"].get<std::string>();
    if (e.contains("category")) {
      if (!e["category"].is_string()) throw FormatError(where + ": \"category\" must be a string");
      entry.category = e["category"].get<std::string>();
    }
    if (e.contains("prompts")) {
      if (!e["prompts"].is_array()) throw FormatError(where + ": \"prompts\" must be a list");
      for (const auto& p : e["prompts"]) {
        if (!p.is_string() || p.get<std::string>().empty()) throw FormatError(where + ": prompts must be nonempty strings");
        entry.prompts.push_back(p.get<std::string>());
      }
    }
    if (entry.prompts.empty()) {
      const std::string subject =
          entry.category.empty() ? std::filesystem::path(entry.mesh).stem().string() : entry.category;
      entry.prompts.push_back(apply_prompt_template(subject));
    }
    m.entries.push_back(std::move(entry));
  }
  return m;
}

BenchmarkManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path());
}

void save_manifest(const BenchmarkManifest& manifest, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    j.push_back({{"mesh", e.mesh}, {"category", e.category}, {"prompts", e.prompts}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace meshfield
