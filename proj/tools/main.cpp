#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "kinlab/config.hpp"
#include "kinlab/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"kinlab - kinetic transport, Milne layers, and diffusive-limit studies"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  int workers = -1;
  long long seed = -1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "TOML config file")->required();
    sub->add_option("--out", out_dir, "output directory (overrides config)");
    sub->add_option("--workers", workers, "worker threads (0 = all)");
    sub->add_option("--seed", seed, "seed recorded in the manifest");
  };
  for (const char* name : {"milne", "transport", "expand", "decompose", "converge"})
    add_common(app.add_subcommand(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? kinlab::runner::kConfigError : 0;
  }

  try {
    kinlab::config::RunConfig cfg = kinlab::config::load_config(config_path);
    cfg.subcommand = app.get_subcommands().front()->get_name();
    kinlab::config::apply_env_overrides(cfg);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (workers >= 0) cfg.workers = workers;
    if (seed >= 0) cfg.seed = (std::uint64_t)seed;
    return kinlab::runner::dispatch(cfg);
  } catch (const kinlab::config::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kinlab::runner::kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kinlab::runner::kConfigError;
  }
}
