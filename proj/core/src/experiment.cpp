#include "tbptt/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "tbptt/checkpoint.hpp"

namespace tbptt {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string task_name(TaskKind t) {
  switch (t) {
    case TaskKind::CopyFixed: return "copy-fixed";
    case TaskKind::CopyVariable: return "copy-variable";
    case TaskKind::SgdTestbed: return "sgd-testbed";
    case TaskKind::ProfileOnly: return "profile-only";
  }
  return "?";
}

namespace {

TaskKind parse_task(const std::string& s) {
  if (s == "copy-fixed") return TaskKind::CopyFixed;
  if (s == "copy-variable") return TaskKind::CopyVariable;
  if (s == "sgd-testbed") return TaskKind::SgdTestbed;
  if (s == "profile-only") return TaskKind::ProfileOnly;
  throw std::invalid_argument("spec: unknown task '" + s + "'");
}

StepSchedule parse_schedule(const std::string& s) {
  if (s == "constant") return StepSchedule::Constant;
  if (s == "inverse-sqrt") return StepSchedule::InverseSqrt;
  throw std::invalid_argument("spec: unknown schedule '" + s + "'");
}

std::string schedule_name(StepSchedule s) {
  return s == StepSchedule::Constant ? "constant" : "inverse-sqrt";
}

ModelConfig::Cell parse_cell(const std::string& s) {
  if (s == "lstm") return ModelConfig::Cell::Lstm;
  if (s == "rnn_tanh") return ModelConfig::Cell::SimpleTanh;
  if (s == "rnn_linear") return ModelConfig::Cell::SimpleIdentity;
  throw std::invalid_argument("spec: unknown cell '" + s + "'");
}

std::string cell_name(ModelConfig::Cell c) {
  switch (c) {
    case ModelConfig::Cell::Lstm: return "lstm";
    case ModelConfig::Cell::SimpleTanh: return "rnn_tanh";
    case ModelConfig::Cell::SimpleIdentity: return "rnn_linear";
  }
  return "?";
}

void expect_keys(const ordered_json& obj, const std::string& scope,
                 std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument("spec" + scope + ": unknown key '" + item.key() + "'");
    }
  }
}

void parse_train(const ordered_json& j, TrainConfig& t) {
  expect_keys(j, ".train",
              {"mode", "delta", "K", "gamma", "schedule", "S", "R", "K0", "K_min", "K_max",
               "epochs", "adapt_period", "beta_method", "tau"});
  if (j.contains("mode")) {
    const std::string m = j.at("mode").get<std::string>();
    if (m == "adaptive") t.mode = TrainMode::Adaptive;
    else if (m == "fixed") t.mode = TrainMode::Fixed;
    else throw std::invalid_argument("spec.train: mode must be 'adaptive' or 'fixed'");
  }
  if (j.contains("delta")) {
    t.delta = j.at("delta").get<double>();
    if (!(t.delta > 0.0 && t.delta < 1.0)) {
      throw std::invalid_argument("spec.train: delta must be in (0,1)");
    }
  }
  if (j.contains("K")) t.fixed_k = j.at("K").get<int>();
  if (j.contains("gamma")) t.gamma = j.at("gamma").get<double>();
  if (j.contains("schedule")) t.schedule = parse_schedule(j.at("schedule").get<std::string>());
  if (j.contains("S")) t.batch_streams = j.at("S").get<int>();
  if (j.contains("R")) t.profile_window = j.at("R").get<int>();
  if (j.contains("K0")) t.k0 = j.at("K0").get<int>();
  if (j.contains("K_min")) t.k_min = j.at("K_min").get<int>();
  if (j.contains("K_max")) t.k_max = j.at("K_max").get<int>();
  if (j.contains("epochs")) t.epochs = j.at("epochs").get<int>();
  if (j.contains("adapt_period")) t.adapt_period = j.at("adapt_period").get<int>();
  if (j.contains("beta_method")) {
    const std::string m = j.at("beta_method").get<std::string>();
    if (m == "regression") t.beta_method = DecayMethod::Regression;
    else if (m == "max-slope") t.beta_method = DecayMethod::MaxSlope;
    else throw std::invalid_argument("spec.train: beta_method must be 'regression' or 'max-slope'");
  }
  if (j.contains("tau")) t.tau = j.at("tau").get<int>();
}

void parse_copy(const ordered_json& j, CopySpec& c) {
  expect_keys(j, ".copy", {"I", "m", "m_low", "m_high", "train_tokens", "eval_tokens"});
  if (j.contains("I")) c.data_symbols = j.at("I").get<int>();
  if (j.contains("m")) c.m_low = c.m_high = j.at("m").get<int>();
  if (j.contains("m_low")) c.m_low = j.at("m_low").get<int>();
  if (j.contains("m_high")) c.m_high = j.at("m_high").get<int>();
  if (j.contains("train_tokens")) c.train_tokens = j.at("train_tokens").get<size_t>();
  if (j.contains("eval_tokens")) c.eval_tokens = j.at("eval_tokens").get<size_t>();
}

void parse_model(const ordered_json& j, ModelConfig& m) {
  expect_keys(j, ".model", {"cell", "layers", "hidden", "embedding"});
  if (j.contains("cell")) m.cell = parse_cell(j.at("cell").get<std::string>());
  if (j.contains("layers")) m.num_layers = j.at("layers").get<int>();
  if (j.contains("hidden")) m.hidden_dim = j.at("hidden").get<int>();
  if (j.contains("embedding")) m.emb_dim = j.at("embedding").get<int>();
}

void parse_testbed(const ordered_json& j, TestbedSpec& t) {
  expect_keys(j, ".testbed",
              {"dim", "amp", "freq", "delta", "sigma", "theta0", "gamma", "steps", "schedule"});
  if (j.contains("dim")) t.dim = j.at("dim").get<int>();
  if (j.contains("amp")) t.amp = j.at("amp").get<double>();
  if (j.contains("freq")) t.freq = j.at("freq").get<double>();
  if (j.contains("delta")) {
    t.delta = j.at("delta").get<double>();
    if (!(t.delta >= 0.0 && t.delta < 1.0)) {
      throw std::invalid_argument("spec.testbed: delta must be in [0,1)");
    }
  }
  if (j.contains("sigma")) t.sigma = j.at("sigma").get<double>();
  if (j.contains("theta0")) t.theta0 = j.at("theta0").get<double>();
  if (j.contains("gamma")) t.gamma = j.at("gamma").get<double>();
  if (j.contains("steps")) t.steps = j.at("steps").get<int>();
  if (j.contains("schedule")) {
    t.schedule = parse_schedule(j.at("schedule").get<std::string>());
  }
}

}  // namespace

ExperimentSpec parse_spec_json(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("spec: not valid JSON: ") + e.what());
  }
  expect_keys(j, "", {"task", "seed", "out", "checkpoint", "train", "copy", "model", "testbed"});
  if (!j.contains("task")) throw std::invalid_argument("spec: missing required key 'task'");

  ExperimentSpec spec;
  spec.task = parse_task(j.at("task").get<std::string>());
  if (spec.task == TaskKind::CopyVariable) {
    spec.copy.m_low = 5;
    spec.copy.m_high = 10;
  }
  if (j.contains("seed")) spec.seed = j.at("seed").get<uint64_t>();
  if (j.contains("out")) spec.out_dir = j.at("out").get<std::string>();
  if (j.contains("checkpoint")) spec.init_checkpoint = j.at("checkpoint").get<std::string>();
  if (j.contains("train")) parse_train(j.at("train"), spec.train);
  if (j.contains("copy")) parse_copy(j.at("copy"), spec.copy);
  if (j.contains("model")) parse_model(j.at("model"), spec.model);
  if (j.contains("testbed")) parse_testbed(j.at("testbed"), spec.testbed);

  if (spec.copy.m_low > spec.copy.m_high || spec.copy.m_low < 1) {
    throw std::invalid_argument("spec.copy: need 1 <= m_low <= m_high");
  }
  if (spec.copy.data_symbols < 1) {
    throw std::invalid_argument("spec.copy: I must be at least 1");
  }
  if (spec.task == TaskKind::CopyFixed || spec.task == TaskKind::CopyVariable) {
    validate(spec.train);
  }
  return spec;
}

ExperimentSpec parse_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::invalid_argument("spec: cannot open file " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_spec_json(text);
}

std::string spec_to_json(const ExperimentSpec& spec) {
  ordered_json j;
  j["task"] = task_name(spec.task);
  j["seed"] = spec.seed;
  j["out"] = spec.out_dir;
  if (!spec.init_checkpoint.empty()) j["checkpoint"] = spec.init_checkpoint;
  j["train"] = {
      {"mode", spec.train.mode == TrainMode::Adaptive ? "adaptive" : "fixed"},
      {"delta", spec.train.delta},
      {"K", spec.train.fixed_k},
      {"gamma", spec.train.gamma},
      {"schedule", schedule_name(spec.train.schedule)},
      {"S", spec.train.batch_streams},
      {"R", spec.train.profile_window},
      {"K0", spec.train.k0},
      {"K_min", spec.train.k_min},
      {"K_max", spec.train.k_max},
      {"epochs", spec.train.epochs},
      {"adapt_period", spec.train.adapt_period},
      {"beta_method",
       spec.train.beta_method == DecayMethod::Regression ? "regression" : "max-slope"},
      {"tau", spec.train.tau},
  };
  j["copy"] = {
      {"I", spec.copy.data_symbols},       {"m_low", spec.copy.m_low},
      {"m_high", spec.copy.m_high},        {"train_tokens", spec.copy.train_tokens},
      {"eval_tokens", spec.copy.eval_tokens},
  };
  j["model"] = {
      {"cell", cell_name(spec.model.cell)},
      {"layers", spec.model.num_layers},
      {"hidden", spec.model.hidden_dim},
      {"embedding", spec.model.emb_dim},
  };
  j["testbed"] = {
      {"dim", spec.testbed.dim},       {"amp", spec.testbed.amp},
      {"freq", spec.testbed.freq},     {"delta", spec.testbed.delta},
      {"sigma", spec.testbed.sigma},   {"theta0", spec.testbed.theta0},
      {"gamma", spec.testbed.gamma},   {"steps", spec.testbed.steps},
      {"schedule", schedule_name(spec.testbed.schedule)},
  };
  return j.dump(2) + "\n";
}

void apply_overrides(ExperimentSpec& spec, const CliOverrides& ov) {
  if (ov.task) {
    spec.task = parse_task(*ov.task);
    if (spec.task == TaskKind::CopyVariable) {
      spec.copy.m_low = 5;
      spec.copy.m_high = 10;
    }
  }
  if (ov.mode) {
    if (*ov.mode == "adaptive") spec.train.mode = TrainMode::Adaptive;
    else if (*ov.mode == "fixed") spec.train.mode = TrainMode::Fixed;
    else throw std::invalid_argument("--mode must be 'adaptive' or 'fixed'");
  }
  if (ov.delta) {
    if (!(*ov.delta > 0.0 && *ov.delta < 1.0)) {
      throw std::invalid_argument("--delta must be in (0,1)");
    }
    spec.train.delta = *ov.delta;
    spec.testbed.delta = *ov.delta;
  }
  if (ov.k) spec.train.fixed_k = *ov.k;
  if (ov.seed) spec.seed = *ov.seed;
  if (ov.epochs) spec.train.epochs = *ov.epochs;
  if (ov.out) spec.out_dir = *ov.out;
}

namespace {

std::string event_filename(const char* stem, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d.csv", stem, index);
  return buf;
}

ordered_json base_summary(const ExperimentSpec& spec) {
  ordered_json s;
  s["task"] = task_name(spec.task);
  if (spec.task == TaskKind::SgdTestbed) {
    s["mode"] = "testbed";
    s["delta_or_K"] = spec.testbed.delta;
  } else if (spec.task == TaskKind::ProfileOnly) {
    s["mode"] = "profile";
    s["delta_or_K"] = nullptr;
  } else if (spec.train.mode == TrainMode::Adaptive) {
    s["mode"] = "adaptive";
    s["delta_or_K"] = spec.train.delta;
  } else {
    s["mode"] = "fixed";
    s["delta_or_K"] = spec.train.fixed_k;
  }
  s["best_valid_ppl"] = nullptr;
  s["test_ppl_at_best"] = nullptr;
  s["epochs_run"] = 0;
  s["seed"] = spec.seed;
  return s;
}

void write_summary(const fs::path& dir, const ordered_json& s) {
  std::ofstream out(dir / "summary.json");
  out << s.dump(2) << "\n";
}

struct CopyData {
  SequenceData train, valid, test;
};

CopyData make_copy_data(const ExperimentSpec& spec) {
  auto gen = [&](uint64_t salt, size_t tokens) {
    CopyConfig cc;
    cc.data_symbols = spec.copy.data_symbols;
    cc.m_low = spec.copy.m_low;
    cc.m_high = spec.copy.m_high;
    cc.total_tokens = tokens;
    cc.seed = SeededRng::derive(spec.seed, salt);
    LabeledSequence seq = gen_copy(cc);
    return SequenceData{std::move(seq.inputs), std::move(seq.targets)};
  };
  CopyData d;
  d.train = gen(1, spec.copy.train_tokens);
  d.valid = gen(2, spec.copy.eval_tokens);
  d.test = gen(3, spec.copy.eval_tokens);
  return d;
}

ModelParams make_or_load_model(const ExperimentSpec& spec) {
  if (!spec.init_checkpoint.empty()) return load_checkpoint(spec.init_checkpoint);
  ModelConfig mc = spec.model;
  mc.vocab = spec.copy.data_symbols + 2;
  SeededRng init_rng(SeededRng::derive(spec.seed, 0));
  return make_model(mc, init_rng);
}

int run_copy_training(const ExperimentSpec& spec) {
  const fs::path dir(spec.out_dir);
  CopyData data = make_copy_data(spec);

  TrainConfig tc = spec.train;
  tc.seed = spec.seed;
  Trainer trainer(make_or_load_model(spec), tc, std::move(data.train), std::move(data.valid),
                  std::move(data.test));

  std::ofstream epochs_csv(dir / "epochs.csv");
  check(epochs_csv.good(), "run: cannot open epochs.csv under " + spec.out_dir);
  write_epoch_csv_header(epochs_csv);

  ordered_json summary = base_summary(spec);
  double best_valid = kInf;
  double test_at_best = kInf;
  ModelParams best_params = trainer.params();
  size_t events_written = 0;
  int exit_code = 0;

  auto flush_events = [&] {
    const auto& events = trainer.adaptation_events();
    for (; events_written < events.size(); ++events_written) {
      const auto& ev = events[events_written];
      const int index = static_cast<int>(events_written) + 1;
      write_bias_bound_csv(dir / event_filename("bias_bound", index), ev.table);
      write_profile_csv(dir / event_filename("profile", index), ev.profile);
    }
  };

  try {
    for (int e = 0; e < tc.epochs; ++e) {
      EpochStats st = trainer.run_epoch();
      write_epoch_csv_row(epochs_csv, st, tc.mode);
      epochs_csv.flush();
      flush_events();
      if (st.valid_ppl < best_valid) {
        best_valid = st.valid_ppl;
        test_at_best = st.test_ppl;
        best_params = trainer.params();
        save_checkpoint(dir / "best_valid.ckpt", best_params);
      }
    }
  } catch (const TrainingDiverged& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    summary["error"] = e.what();
    exit_code = 1;
  }
  flush_events();
  save_checkpoint(dir / "final.ckpt", trainer.params());

  if (trainer.epochs_run() > 0) {
    summary["best_valid_ppl"] = best_valid;
    summary["test_ppl_at_best"] = test_at_best;
  }
  summary["epochs_run"] = trainer.epochs_run();
  write_summary(dir, summary);
  return exit_code;
}

int run_profile_only(const ExperimentSpec& spec) {
  const fs::path dir(spec.out_dir);
  CopyData data = make_copy_data(spec);
  ModelParams model = make_or_load_model(spec);

  const int r = spec.train.profile_window;
  check(data.train.length() >= 2 * static_cast<size_t>(r),
        "profile-only: training data shorter than profiling span");
  SeededRng rng(SeededRng::derive(spec.seed, 0x70726F66));
  const size_t lo = 2 * static_cast<size_t>(r) - 1;
  const size_t range = data.train.length() - lo;
  std::vector<size_t> samples(spec.train.batch_streams);
  for (auto& s : samples) s = lo + static_cast<size_t>(rng.uniform_int(static_cast<int>(range)));

  GradNormProfile profile =
      grad_norm_profile(model, data.train.inputs, data.train.targets, samples, r);
  write_profile_csv(dir / "profile.csv", profile);

  MeanProfile mp = mean_profile(profile);
  const int tau = spec.train.tau >= 0 ? spec.train.tau : default_tau(r);
  DecayEstimate de = estimate_beta(mp, tau, spec.train.beta_method);
  write_bias_bound_csv(dir / "bias_bound.csv", bias_bound_table(mp, de));

  write_summary(dir, base_summary(spec));
  return 0;
}

int run_sgd_testbed(const ExperimentSpec& spec) {
  const fs::path dir(spec.out_dir);
  BiasedLossOracle::Config oc;
  oc.dim = spec.testbed.dim;
  oc.amp = spec.testbed.amp;
  oc.freq = spec.testbed.freq;
  oc.delta = spec.testbed.delta;
  oc.sigma = spec.testbed.sigma;
  oc.seed = SeededRng::derive(spec.seed, 0x74657374);
  BiasedLossOracle oracle(oc);

  std::vector<double> theta0(oc.dim, spec.testbed.theta0);
  TestbedSchedule sched = spec.testbed.schedule == StepSchedule::Constant
                              ? TestbedSchedule::Constant
                              : TestbedSchedule::InverseSqrt;
  const double gamma = spec.testbed.gamma > 0.0
                           ? spec.testbed.gamma
                           : optimal_testbed_stepsize(oracle, theta0, spec.testbed.steps);
  BiasedSgdResult r = run_biased_sgd(oracle, theta0, sched, gamma, spec.testbed.steps);

  std::ofstream csv(dir / "testbed.csv");
  check(csv.good(), "run: cannot open testbed.csv under " + spec.out_dir);
  csv << "n,grad_norm_sq,min_so_far\n";
  double running = kInf;
  for (size_t n = 0; n < r.grad_norm_sq.size(); ++n) {
    running = std::min(running, r.grad_norm_sq[n]);
    csv << (n + 1) << ',' << format_double(r.grad_norm_sq[n]) << ',' << format_double(running)
        << '\n';
  }

  ordered_json summary = base_summary(spec);
  summary["epochs_run"] = spec.testbed.steps;
  summary["gamma"] = gamma;
  summary["min_grad_norm_sq"] = r.min_grad_norm_sq;
  summary["bound_general"] = r.bound_general;
  summary["bound_optimal"] = r.bound_optimal;
  summary["bound_satisfied"] = r.min_grad_norm_sq <= r.bound_general;
  summary["stepsize_warning"] = r.stepsize_warning;
  write_summary(dir, summary);
  return 0;
}

}  // namespace

int run_experiment(const ExperimentSpec& spec) {
  fs::create_directories(spec.out_dir);
  switch (spec.task) {
    case TaskKind::CopyFixed:
    case TaskKind::CopyVariable:
      return run_copy_training(spec);
    case TaskKind::ProfileOnly:
      return run_profile_only(spec);
    case TaskKind::SgdTestbed:
      return run_sgd_testbed(spec);
  }
  return 2;
}

}  // namespace tbptt
