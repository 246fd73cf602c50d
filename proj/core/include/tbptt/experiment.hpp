#pragma once

#include <optional>
#include <string>

#include "tbptt/tasks.hpp"
#include "tbptt/trainer.hpp"

namespace tbptt {

enum class TaskKind { CopyFixed, CopyVariable, SgdTestbed, ProfileOnly };

std::string task_name(TaskKind t);

struct CopySpec {
  int data_symbols = 6;  // I
  int m_low = 10;
  int m_high = 10;
  size_t train_tokens = 256000;
  size_t eval_tokens = 64000;
  friend bool operator==(const CopySpec&, const CopySpec&) = default;
};

struct TestbedSpec {
  int dim = 20;
  double amp = 0.25;
  double freq = 1.4142135623730951;
  double delta = 0.5;
  double sigma = 1.0;
  double theta0 = 2.0;   // every coordinate of the start point
  double gamma = 0.0;    // 0 selects the bound-optimal constant stepsize
  int steps = 10000;
  StepSchedule schedule = StepSchedule::Constant;
  friend bool operator==(const TestbedSpec&, const TestbedSpec&) = default;
};

struct ExperimentSpec {
  TaskKind task = TaskKind::CopyFixed;
  uint64_t seed = 0;
  std::string out_dir = "out";
  std::string init_checkpoint;  // optional starting model (profile-only)
  TrainConfig train;
  CopySpec copy;
  ModelConfig model;
  TestbedSpec testbed;
  friend bool operator==(const ExperimentSpec&, const ExperimentSpec&) = default;
};

// JSON spec file <-> ExperimentSpec.  Unknown keys are rejected with an error
// naming the key; missing optional keys take the defaults above (copy-variable
// switches the memory range to [5, 10] unless given explicitly).
ExperimentSpec parse_spec_json(const std::string& json_text);
ExperimentSpec parse_spec_file(const std::string& path);
std::string spec_to_json(const ExperimentSpec& spec);

struct CliOverrides {
  std::optional<std::string> task;
  std::optional<std::string> mode;
  std::optional<double> delta;
  std::optional<int> k;
  std::optional<uint64_t> seed;
  std::optional<int> epochs;
  std::optional<std::string> out;
};

void apply_overrides(ExperimentSpec& spec, const CliOverrides& ov);

// Runs the experiment, writing artifacts under spec.out_dir:
//   epochs.csv                    per-epoch stats (training tasks)
//   bias_bound_NNNN.csv           one table per adaptation event
//   profile_NNNN.csv / profile.csv  gradient-norm profiles
//   best_valid.ckpt, final.ckpt   model checkpoints
//   testbed.csv                   gradient-norm trajectory (sgd-testbed)
//   summary.json
// Returns the process exit code; artifacts written so far survive an abort.
int run_experiment(const ExperimentSpec& spec);

}  // namespace tbptt
