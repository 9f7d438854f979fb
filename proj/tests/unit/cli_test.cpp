#include <gtest/gtest.h>

#include <json.hpp>
#include <sstream>

#include "cli.hpp"
#include "fake_sidecar.hpp"
#include "meshfield/bench.hpp"
#include "meshfield/errors.hpp"
#include "run_config.hpp"
#include "temp_dir.hpp"

using namespace meshfield;
using meshfield::testing::FakeSidecar;
using meshfield::testing::read_file;
using meshfield::testing::TempDir;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Small settings so a stylize run finishes in a couple of seconds.
std::vector<std::string> fast_flags() {
  return {"--dim", "16", "--frequencies", "8", "--rank", "3", "--reduction", "4", "--views", "1", "--iterations", "2",
          "--render-size", "32", "--eval-size", "32", "--snapshot-every", "0"};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::string write_ball(const TempDir& dir, unsigned subdiv = 1) {
  const auto p = dir / "ball.obj";
  save_mesh(normalize_and_init(make_icosphere(subdiv)), p, MeshFormat::obj);
  return p.string();
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);
  EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"stylize", "--iterations", "many"}).code, cli::kExitUsage);
}

TEST(Cli, MissingMeshIsUsageError) {
  const auto r = run_cli({"stylize", "--mesh", "nope.obj", "--prompt", "x"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("nope.obj"), std::string::npos);
}

TEST(Cli, PromptAndTargetAreExclusive) {
  TempDir dir;
  const auto mesh = write_ball(dir);
  EXPECT_EQ(run_cli({"stylize", "--mesh", mesh}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"stylize", "--mesh", mesh, "--prompt", "x", "--target-from", mesh}).code, cli::kExitUsage);
}

TEST(Cli, BadConfigFileIsUsageError) {
  TempDir dir;
  const auto mesh = write_ball(dir);
  const auto cfg = dir.write("c.json", R"({"no_such_key": 1})");
  EXPECT_EQ(run_cli({"stylize", "--mesh", mesh, "--prompt", "x", "--config", cfg.string()}).code, cli::kExitUsage);
}

TEST(Cli, StylizeWritesRunDirectory) {
  TempDir dir;
  const auto mesh = write_ball(dir);
  const auto run = (dir / "run").string();
  const auto r = run_cli(concat({"stylize", "--mesh", mesh, "--prompt", "a wooden ball", "--out", run}, fast_flags()));
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find("MES: "), std::string::npos);
  for (const char* f : {"history.csv", "timing.csv", "final.obj", "final.ply", "config.json", "report.json"})
    EXPECT_TRUE(std::filesystem::exists(dir / "run" / f)) << f;
  const auto report = nlohmann::json::parse(read_file(dir / "run" / "report.json"));
  EXPECT_EQ(report["iterations"], 2);
  EXPECT_EQ(report["backend"], "toy");
}

TEST(Cli, StylizeIsReproducible) {
  TempDir dir;
  const auto mesh = write_ball(dir);
  for (const char* name : {"a", "b"}) {
    const auto r = run_cli(concat({"stylize", "--mesh", mesh, "--prompt", "red", "--seed", "3", "--out",
                                   (dir / name).string()},
                                  fast_flags()));
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  }
  EXPECT_EQ(read_file(dir / "a" / "history.csv"), read_file(dir / "b" / "history.csv"));
  EXPECT_EQ(read_file(dir / "a" / "final.obj"), read_file(dir / "b" / "final.obj"));
}

TEST(Cli, StylizeFromReferenceMesh) {
  TempDir dir;
  const auto mesh = write_ball(dir);
  Mesh painted = normalize_and_init(make_icosphere(1));
  for (auto& c : painted.colors) c = {0.9, 0.2, 0.1};
  save_mesh(painted, dir / "ref.ply", MeshFormat::ply);
  const auto r = run_cli(concat({"stylize", "--mesh", mesh, "--target-from", (dir / "ref.ply").string(), "--out",
                                 (dir / "run").string()},
                                fast_flags()));
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto report = nlohmann::json::parse(read_file(dir / "run" / "report.json"));
  EXPECT_EQ(report["objective"], "target_embedding");
}

TEST(Cli, FlagsOverrideConfigFile) {
  TempDir dir;
  const auto mesh = write_ball(dir);
  const auto cfg = dir.write("c.json", R"({"seed": 7, "lr": 0.01, "views": 3})");
  const auto r = run_cli(concat({"stylize", "--mesh", mesh, "--prompt", "x", "--config", cfg.string(), "--out",
                                 (dir / "run").string()},
                                concat(fast_flags(), {"--seed", "9"})));
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto c = nlohmann::json::parse(read_file(dir / "run" / "config.json"));
  EXPECT_EQ(c["seed"], 9);
  EXPECT_EQ(c["lr"], 0.01);
  EXPECT_EQ(c["views"], 1);
  EXPECT_EQ(c["sigma"], 12.0);
}

TEST(RunConfig, JsonOverlayAndValidation) {
  cli::RunConfig c;
  cli::apply_json(c, R"({"iterations": 10, "geometry": false, "backend": "toy"})");
  EXPECT_EQ(c.iterations, 10u);
  EXPECT_FALSE(c.geometry);
  EXPECT_THROW(cli::apply_json(c, R"({"iterations": "ten"})"), ConfigError);
  EXPECT_THROW(cli::apply_json(c, R"([1, 2])"), ConfigError);
  EXPECT_EQ(c.field_config().text_dim, c.dim);
  EXPECT_EQ(c.train_config().iterations, 10u);
  cli::RunConfig round;
  cli::apply_json(round, c.to_json());
  EXPECT_EQ(round.to_json(), c.to_json());
}

TEST(Cli, EvalAgainstFakeSidecar) {
  TempDir dir;
  const auto mesh = write_ball(dir);
  FakeSidecar sidecar;
  const auto r = run_cli({"eval", "--mesh", mesh, "--prompt", "a ball", "--backend", "remote:" + sidecar.url(), "--dim",
                          "16", "--eval-size", "32", "--out", (dir / "views").string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find("MES: 0.250000 (x100: 25.00)"), std::string::npos) << r.out;
  std::size_t pngs = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "views")) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 24u);
  EXPECT_TRUE(std::filesystem::exists(dir / "views" / "azi315_ele-30.png"));
}

TEST(Cli, UnreachableBackendIsRuntimeFailure) {
  TempDir dir;
  const auto mesh = write_ball(dir);
  int port = 0;
  {
    FakeSidecar s;
    port = s.port();
  }
  const std::string url = "http://127.0.0.1:" + std::to_string(port);
  const auto r = run_cli({"eval", "--mesh", mesh, "--prompt", "x", "--backend", "remote:" + url, "--dim", "16",
                          "--timeout-ms", "500", "--eval-size", "32", "--out", (dir / "v").string()});
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_NE(r.err.find(url), std::string::npos) << r.err;
}

TEST(Cli, GenSamplesSubdivision) {
  TempDir dir;
  const auto r = run_cli({"gen-samples", "--out", dir.path().string(), "--subdiv", "2"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_EQ(load_mesh(dir / "icosphere.obj").num_vertices(), 162u);
  EXPECT_EQ(run_cli({"gen-samples", "--out", dir.path().string(), "--subdiv", "99"}).code, cli::kExitUsage);
}

TEST(Cli, BenchOnSmallManifest) {
  TempDir dir;
  write_ball(dir, 0);
  dir.write("manifest.json", R"([{"mesh":"ball.obj","category":"ball","prompts":["a red ball"]}])");
  const auto r = run_cli(concat({"bench", "--manifest", (dir / "manifest.json").string(), "--out",
                                 (dir / "report").string(), "--eval-every", "1"},
                                fast_flags()));
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find("samples: 1, failures: 0"), std::string::npos) << r.out;
  EXPECT_TRUE(std::filesystem::exists(dir / "report" / "report.csv"));
}

TEST(Cli, BenchReportsFailedEntries) {
  TempDir dir;
  dir.write("manifest.json", R"([{"mesh":"missing.obj","prompts":["x"]}])");
  const auto r = run_cli(concat({"bench", "--manifest", (dir / "manifest.json").string(), "--out",
                                 (dir / "report").string()},
                                fast_flags()));
  EXPECT_EQ(r.code, cli::kExitFailure);
}
