#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tbptt/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"RNN training with adaptively truncated backpropagation through time"};

  std::string spec_path;
  tbptt::CliOverrides ov;
  std::string task, mode, out;
  double delta = 0.0;
  int k = 0, epochs = 0;
  uint64_t seed = 0;

  app.add_option("--spec", spec_path, "JSON experiment spec; flags override its values");
  auto* task_opt = app.add_option(
      "--task", task, "copy-fixed | copy-variable | sgd-testbed | profile-only");
  auto* mode_opt = app.add_option("--mode", mode, "adaptive | fixed");
  auto* delta_opt =
      app.add_option("--delta", delta, "relative-bias tolerance for adaptive truncation");
  auto* k_opt = app.add_option("--K", k, "truncation length for fixed mode");
  auto* seed_opt = app.add_option("--seed", seed, "random seed");
  auto* epochs_opt = app.add_option("--epochs", epochs, "training epochs");
  auto* out_opt = app.add_option("--out", out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    tbptt::ExperimentSpec spec;
    if (!spec_path.empty()) {
      spec = tbptt::parse_spec_file(spec_path);
    } else if (!*task_opt) {
      std::cerr << "error: need --spec or --task\n";
      return 2;
    }
    if (*task_opt) ov.task = task;
    if (*mode_opt) ov.mode = mode;
    if (*delta_opt) ov.delta = delta;
    if (*k_opt) ov.k = k;
    if (*seed_opt) ov.seed = seed;
    if (*epochs_opt) ov.epochs = epochs;
    if (*out_opt) ov.out = out;
    tbptt::apply_overrides(spec, ov);

    return tbptt::run_experiment(spec);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
