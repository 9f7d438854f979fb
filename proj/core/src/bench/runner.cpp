#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "meshfield/bench.hpp"
#include "meshfield/errors.hpp"

namespace meshfield {

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

SampleResult run_sample(const Mesh& mesh, const ManifestEntry& entry, std::size_t prompt_index,
                        const BenchmarkConfig& config, const EmbeddingBackend& train_backend,
                        const EmbeddingBackend& eval_backend) {
  SampleResult r;
  r.key = entry.mesh + "#" + std::to_string(prompt_index);
  r.mesh = entry.mesh;
  r.category = entry.category;
  r.prompt = entry.prompts[prompt_index];

  FieldConfig field_config = config.field;
  field_config.text_dim = train_backend.dim();
  StyleField field(field_config);
  TrainConfig train = config.train;
  if (train.eval_every == 0) train.eval_every = 10;

  const auto text = eval_backend.embed_text(r.prompt);
  StylizeHooks hooks;
  hooks.evaluate = [&](const StylizedMesh& s, std::size_t) {
    return mes_views(s, text, eval_backend, config.eval_size, train.render).score;
  };
  const auto result = stylize(field, mesh, train_backend, Objective::from_prompt(r.prompt), train, {}, hooks);

  r.iterations = result.history.loss.size();
  r.final_loss = result.history.loss.back();
  r.curve = result.history.mes_curve;
  if (!r.curve.empty() && r.curve.back().first == r.iterations) {
    r.mes = r.curve.back().second;
  } else {
    r.mes = mes_views(result.mesh, text, eval_backend, config.eval_size, train.render).score;
    r.curve.emplace_back(r.iterations, r.mes);
  }
  r.best_mes = r.curve.front().second;
  r.best_iteration = r.curve.front().first;
  for (const auto& [it, score] : r.curve)
    if (score > r.best_mes) {
      r.best_mes = score;
      r.best_iteration = it;
    }
  r.its = its(r.curve, config.its_threshold);
  return r;
}

}  // namespace

void aggregate(MetricReport& report) {
  std::sort(report.samples.begin(), report.samples.end(),
            [](const SampleResult& a, const SampleResult& b) { return a.key < b.key; });
  double mes_sum = 0.0, its_sum = 0.0;
  std::size_t ok = 0;
  report.failures = 0;
  for (const auto& s : report.samples) {
    if (!s.error.empty()) {
      ++report.failures;
      continue;
    }
    mes_sum += s.mes;
    its_sum += static_cast<double>(s.its);
    ++ok;
  }
  report.mean_mes = ok ? mes_sum / static_cast<double>(ok) : 0.0;
  report.mean_its = ok ? its_sum / static_cast<double>(ok) : 0.0;
}

void write_report(const MetricReport& report, const std::string& config_json, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream csv(out_dir / "report.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write " + (out_dir / "report.csv").string());
    csv << "key,mesh,category,prompt,mes,mes_x100,best_mes,best_iteration,its,iterations,final_loss,error\n";
    for (const auto& s : report.samples) {
      csv << csv_field(s.key) << ',' << csv_field(s.mesh) << ',' << csv_field(s.category) << ','
          << csv_field(s.prompt) << ',' << fmt(s.mes) << ',' << fmt(s.mes * 100.0) << ',' << fmt(s.best_mes) << ','
          << s.best_iteration << ',' << s.its << ',' << s.iterations << ',' << fmt(s.final_loss) << ','
          << csv_field(s.error) << '\n';
    }
    if (!csv) throw IoError("failed writing report.csv");
  }
  nlohmann::json j;
  j["backend"] = report.backend;
  j["camera_hash"] = report.camera_hash;
  j["its_threshold"] = report.its_threshold;
  j["aggregates"] = {{"mes", report.mean_mes},
                     {"mes_x100", report.mean_mes * 100.0},
                     {"its", report.mean_its},
                     {"samples", report.samples.size()},
                     {"failures", report.failures}};
  try {
    j["config"] = nlohmann::json::parse(config_json);
  } catch (const nlohmann::json::exception&) {
    j["config"] = config_json;
  }
  j["samples"] = nlohmann::json::array();
  for (const auto& s : report.samples) {
    nlohmann::json row = {{"key", s.key},
                          {"mesh", s.mesh},
                          {"category", s.category},
                          {"prompt", s.prompt},
                          {"mes", s.mes},
                          {"best_mes", s.best_mes},
                          {"best_iteration", s.best_iteration},
                          {"its", s.its},
                          {"iterations", s.iterations},
                          {"final_loss", s.final_loss},
                          {"curve", s.curve}};
    if (!s.error.empty()) row["error"] = s.error;
    j["samples"].push_back(std::move(row));
  }
  std::ofstream out(out_dir / "report.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (out_dir / "report.json").string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing report.json");
}

MetricReport run_benchmark(const BenchmarkManifest& manifest, const BenchmarkConfig& config,
                           const EmbeddingBackend& train_backend, const EmbeddingBackend& eval_backend,
                           const std::filesystem::path& out_dir) {
  MetricReport report;
  report.its_threshold = config.its_threshold;
  const auto cams = evaluation_cameras(config.eval_size);
  report.camera_hash = camera_set_hash(cams);
  report.backend = eval_backend.name();

  for (const auto& entry : manifest.entries) {
    Mesh mesh;
    std::string load_error;
    try {
      mesh = normalize_and_init(load_mesh(manifest.mesh_path(entry)));
    } catch (const Error& e) {
      load_error = e.what();
    }
    for (std::size_t p = 0; p < entry.prompts.size(); ++p) {
      SampleResult r;
      if (load_error.empty()) {
        try {
          r = run_sample(mesh, entry, p, config, train_backend, eval_backend);
        } catch (const Error& e) {
          r.error = e.what();
        }
      } else {
        r.error = load_error;
      }
      if (!r.error.empty()) {
        r.key = entry.mesh + "#" + std::to_string(p);
        r.mesh = entry.mesh;
        r.category = entry.category;
        r.prompt = entry.prompts[p];
      }
      report.samples.push_back(std::move(r));
    }
  }
  aggregate(report);
  if (!out_dir.empty()) write_report(report, config.config_json, out_dir);
  return report;
}

}  // namespace meshfield
