#include <CLI11.hpp>

#include <iostream>

#include "anderson/cli/runner.hpp"

namespace ac = anderson::cli;

namespace {

// A --config file may be a plain config or a previous run's manifest.
struct Loaded {
  ac::ExperimentConfig cfg;
  std::optional<std::string> command;
};

Loaded load_config(const std::string& path) {
  const auto text = anderson::read_file(path);
  anderson::json j;
  try {
    j = anderson::json::parse(text);
  } catch (const anderson::json::exception& e) {
    throw anderson::InvalidArgument("config: " + path + " is not valid JSON: " + e.what());
  }
  if (j.is_object() && j.contains("tool") && j.contains("config")) {
    const auto r = ac::load_manifest(j);
    return {r.cfg, r.command};
  }
  return {ac::config_from_json(j), std::nullopt};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Localized eigenvector computation for Schrödinger operators with random potentials"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool full = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config or manifest")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--full", full, "full-size figure pipelines");
  };

  std::vector<std::pair<std::string, CLI::App*>> subs;
  for (const auto& name : ac::commands()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " pipeline");
    add_common(sub);
    subs.emplace_back(name, sub);
  }
  std::string manifest_path;
  auto* rerun = app.add_subcommand("rerun", "repeat a run from its manifest.json");
  rerun->add_option("manifest", manifest_path, "manifest.json")->required()->check(CLI::ExistingFile);
  rerun->add_option("--out", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ac::RunOptions opt;
    opt.out_dir = out_dir;
    if (rerun->parsed()) {
      const auto r = ac::load_manifest(anderson::json::parse(anderson::read_file(manifest_path)));
      opt.threads = r.opt.threads;
      opt.full = r.opt.full;
      return ac::run_main(r.command, r.cfg, opt, std::cerr, manifest_path);
    }
    std::string command;
    for (const auto& [name, sub] : subs)
      if (sub->parsed()) command = name;
    ac::ExperimentConfig cfg;
    if (!config_path.empty()) {
      auto loaded = load_config(config_path);
      cfg = loaded.cfg;
      if (loaded.command && *loaded.command != command)
        std::cerr << "note: manifest was written by '" << *loaded.command << "', running '" << command << "'\n";
    }
    if (seed) cfg.seed = *seed;
    opt.threads = threads;
    opt.full = full;
    return ac::run_main(command, cfg, opt, std::cerr, config_path);
  } catch (const anderson::InvalidArgument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const anderson::json::exception& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  }
}
