#include <catch_amalgamated.hpp>

#include <sstream>

#include "anderson/cli/runner.hpp"

using namespace anderson;
using namespace anderson::cli;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("anderson_cli_test_" + name);
  fs::remove_all(dir);
  return dir;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.field.d = 1;
  cfg.field.inv_eps = 32;
  cfg.subgrid.m = 4;
  cfg.iteration.n_ev = 10;
  cfg.iteration.steps = 4;
  cfg.analysis.samples = 5;
  cfg.analysis.k_max = 8;
  return cfg;
}

}  // namespace

TEST_CASE("config parsing rejects unknown keys and bad choices") {
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"field": {"bogus": 1}})")), InvalidArgument);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"field": {"d": "two"}})")), InvalidArgument);
  auto cfg = small_config();
  cfg.preconditioner.mode = "magic";
  CHECK_THROWS_AS(validate(cfg), InvalidArgument);
}

TEST_CASE("config json round trip and hash ignores the output directory") {
  auto cfg = small_config();
  cfg.preconditioner.target_gamma = 0.3;
  const auto back = config_from_json(json::parse(config_to_json(cfg).dump()));
  CHECK(config_to_json(back) == config_to_json(cfg));
  auto moved = cfg;
  moved.output.dir = "elsewhere";
  CHECK(config_hash(moved) == config_hash(cfg));
  moved.seed = 2;
  CHECK(config_hash(moved) != config_hash(cfg));
}

TEST_CASE("runs are deterministic and reproducible from the manifest") {
  for (const std::string command : {"oracle", "block", "green-decay", "friedrichs"}) {
    CAPTURE(command);
    const auto a = run(command, small_config(), {scratch(command + "_a"), 1, false});
    const auto b = run(command, small_config(), {scratch(command + "_b"), 1, false});
    CHECK(a.manifest["outputs"] == b.manifest["outputs"]);
    CHECK_FALSE(a.manifest["outputs"].empty());

    auto r = load_manifest(json::parse(read_file(a.out_dir / "manifest.json")));
    r.opt.out_dir = scratch(command + "_rerun");
    const auto c = run(r.command, r.cfg, r.opt);
    CHECK(read_file(c.out_dir / "manifest.json") == read_file(a.out_dir / "manifest.json"));
    for (const auto& [name, hash] : a.manifest["outputs"].items())
      CHECK(read_file(c.out_dir / name) == read_file(a.out_dir / name));
  }
}

TEST_CASE("thread count does not change outputs") {
  const auto one = run("block", small_config(), {scratch("t1"), 1, false});
  const auto two = run("block", small_config(), {scratch("t2"), 2, false});
  CHECK(one.manifest["outputs"] == two.manifest["outputs"]);
}

TEST_CASE("exit codes") {
  std::ostringstream err;
  auto bad = small_config();
  bad.field.inv_eps = 1;
  CHECK(run_main("gen", bad, {scratch("bad"), 1, false}, err) == 2);
  CHECK(run_main("nonsense", small_config(), {scratch("bad"), 1, false}, err) == 2);

  auto tight = small_config();
  tight.preconditioner.k_inner = 1;
  CHECK(run_main("block", tight, {scratch("tight"), 1, false}, err) == 3);
  CHECK(err.str().find("k_inner") != std::string::npos);

  CHECK(run_main("gen", small_config(), {scratch("ok"), 1, false}, err) == 0);
}

TEST_CASE("outputs carry the config hash") {
  const auto res = run("eigen-decay", small_config(), {scratch("hash"), 1, false});
  const auto hash = res.manifest["config_hash"].get<std::string>();
  const auto csv = read_file(res.out_dir / "decay.csv");
  CHECK(csv.rfind("# config_hash: " + hash + "\n", 0) == 0);
  CHECK(json::parse(read_file(res.out_dir / "decay.json"))["config_hash"] == hash);
  for (const auto& [name, h] : res.manifest["outputs"].items())
    CHECK(content_hash(read_file(res.out_dir / name)) == h.get<std::string>());
}

TEST_CASE("output root from the environment") {
  const auto root = scratch("root");
  ::setenv("ANDERSON_OUT_ROOT", root.c_str(), 1);
  auto cfg = small_config();
  cfg.output.dir = "rel";
  CHECK(resolve_out_dir(cfg, {}) == root / "rel");
  CHECK(resolve_out_dir(cfg, {"/abs", 1, false}) == fs::path("/abs"));
  ::unsetenv("ANDERSON_OUT_ROOT");
  CHECK(resolve_out_dir(cfg, {}) == fs::path("rel"));
}
