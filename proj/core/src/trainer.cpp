#include "tbptt/trainer.hpp"

#include <chrono>
#include <cmath>

#include "tbptt/checkpoint.hpp"
#include "tbptt/tasks.hpp"

namespace tbptt {

void validate(const TrainConfig& cfg) {
  if (cfg.mode == TrainMode::Adaptive) {
    check(cfg.delta > 0.0 && cfg.delta < 1.0, "config: delta must be in (0,1)");
  } else {
    check(cfg.fixed_k >= 1, "config: K must be at least 1");
  }
  check(cfg.gamma > 0.0, "config: gamma must be positive");
  check(cfg.batch_streams >= 1, "config: S must be at least 1");
  check(cfg.profile_window >= 2, "config: R must be at least 2");
  check(cfg.k_min >= 1, "config: K_min must be at least 1");
  check(cfg.k_min <= cfg.k0 && cfg.k0 <= cfg.k_max, "config: need K_min <= K_0 <= K_max");
  check(cfg.k_max <= cfg.profile_window, "config: need K_max <= R");
  check(cfg.epochs >= 1, "config: epochs must be at least 1");
  check(cfg.adapt_period >= 1, "config: adapt_period must be at least 1");
  check(cfg.tau == -1 || (cfg.tau >= 0 && cfg.tau < cfg.profile_window),
        "config: tau must be -1 or in [0, R)");
}

std::vector<std::span<const int>> partition_streams(std::span<const int> tokens, int s) {
  check(s >= 1, "partition_streams: need at least one stream");
  check(tokens.size() >= static_cast<size_t>(s), "partition_streams: fewer tokens than streams");
  const size_t len = tokens.size() / s;
  std::vector<std::span<const int>> streams;
  streams.reserve(s);
  for (int i = 0; i < s; ++i) streams.push_back(tokens.subspan(i * len, len));
  return streams;
}

std::vector<WindowRange> streaming_windows(size_t stream_len, int k) {
  check(k >= 1, "streaming_windows: K must be at least 1");
  std::vector<WindowRange> windows;
  const size_t kk = static_cast<size_t>(k);
  for (size_t begin = 0; begin + kk <= stream_len; begin += kk) {
    windows.push_back({begin, begin + kk});
  }
  return windows;
}

void sgd_update(ModelParams& theta, GradAccumulator& ghat, double gamma_n, int k_n) {
  if (!grad_all_finite(ghat)) {
    throw TrainingDiverged("sgd_update: nonfinite gradient (K=" + std::to_string(k_n) + ")");
  }
  const double step = gamma_n * std::sqrt(static_cast<double>(k_n));
  auto tv = tensor_views(theta);
  auto gv = ghat.views();
  for (size_t t = 0; t < tv.size(); ++t) {
    for (size_t i = 0; i < tv[t].size(); ++i) tv[t].data[i] -= step * gv[t].data[i];
  }
}

double stepsize(int n, const TrainConfig& cfg) {
  check(n >= 1, "stepsize: epoch index is 1-based");
  if (cfg.schedule == StepSchedule::Constant) return cfg.gamma;
  return cfg.gamma / std::sqrt(static_cast<double>(n));
}

void write_epoch_csv_header(std::ostream& out) {
  out << "epoch,mode,K_n,beta_hat,delta_hat_at_Kn,train_loss,valid_ppl,test_ppl,wallclock_s\n";
}

void write_epoch_csv_row(std::ostream& out, const EpochStats& st, TrainMode mode) {
  out << st.epoch << ',' << (mode == TrainMode::Adaptive ? "adaptive" : "fixed") << ','
      << st.k_used << ',' << format_double(st.beta_hat) << ','
      << format_double(st.delta_hat_at_k) << ',' << format_double(st.train_loss) << ','
      << format_double(st.valid_ppl) << ',' << format_double(st.test_ppl) << ','
      << format_double(st.wallclock_s) << '\n';
}

Trainer::Trainer(ModelParams theta, TrainConfig cfg, SequenceData train, SequenceData valid,
                 SequenceData test)
    : theta_(std::move(theta)),
      cfg_(cfg),
      train_(std::move(train)),
      valid_(std::move(valid)),
      test_(std::move(test)),
      profile_rng_(SeededRng::derive(cfg.seed, 0x70726F66)) {
  validate(cfg_);
  check(train_.inputs.size() == train_.targets.size(), "trainer: train inputs/targets mismatch");
  check(!valid_.inputs.empty() && !test_.inputs.empty(), "trainer: empty eval split");

  stream_inputs_ = partition_streams(train_.inputs, cfg_.batch_streams);
  stream_targets_ = partition_streams(train_.targets, cfg_.batch_streams);
  const size_t stream_len = stream_inputs_.front().size();
  check(stream_len >= static_cast<size_t>(cfg_.k_max),
        "trainer: streams shorter than K_max");
  if (cfg_.mode == TrainMode::Adaptive) {
    check(train_.inputs.size() >= 2 * static_cast<size_t>(cfg_.profile_window),
          "trainer: training data shorter than profiling span");
  }

  streams_.resize(cfg_.batch_streams);
  for (auto& st : streams_) st.carry = zero_state(theta_);
  current_k_ = cfg_.mode == TrainMode::Adaptive ? cfg_.k0 : cfg_.fixed_k;
}

const AdaptationEvent& Trainer::adapt_truncation() {
  const int r = cfg_.profile_window;
  const size_t lo = 2 * static_cast<size_t>(r) - 1;
  check(train_.inputs.size() > lo, "adapt_truncation: training data too short for window");

  std::vector<size_t> samples(cfg_.batch_streams);
  const size_t range = train_.inputs.size() - lo;
  for (auto& s : samples) {
    s = lo + static_cast<size_t>(profile_rng_.uniform_int(static_cast<int>(range)));
  }

  AdaptationEvent ev;
  ev.epoch = epoch_ + 1;
  ev.profile = grad_norm_profile(theta_, train_.inputs, train_.targets, samples, r);
  MeanProfile mp = mean_profile(ev.profile);
  const int tau = cfg_.tau >= 0 ? cfg_.tau : default_tau(r);
  DecayEstimate de = estimate_beta(mp, tau, cfg_.beta_method);
  ev.table = bias_bound_table(mp, de);
  ev.selection = select_truncation(ev.table, cfg_.delta, cfg_.k_min, cfg_.k_max);
  events_.push_back(std::move(ev));

  const auto& back = events_.back();
  current_k_ = back.selection.k;
  last_beta_ = back.table.no_decay ? std::numeric_limits<double>::quiet_NaN() : back.table.beta;
  last_delta_hat_ = back.table.delta_hat[back.selection.k];
  last_clamped_ = back.selection.clamped;
  return back;
}

double Trainer::evaluate_ppl(const SequenceData& data) const {
  HiddenStates state = zero_state(theta_);
  WindowResult r = forward_window(theta_, state, data.inputs, data.targets, nullptr);
  return perplexity(r.losses);
}

EpochStats Trainer::run_epoch() {
  const auto epoch_start = std::chrono::steady_clock::now();
  const int n = epoch_ + 1;

  if (cfg_.mode == TrainMode::Adaptive && (epoch_ % cfg_.adapt_period) == 0) {
    adapt_truncation();
  }
  const int k = current_k_;
  const double gamma_n = stepsize(n, cfg_);

  EpochStats st;
  st.epoch = n;
  st.k_used = k;
  st.beta_hat = last_beta_;
  st.delta_hat_at_k = last_delta_hat_;
  st.clamped = last_clamped_;

  // Window tiling restarts each epoch; carried hidden states persist, stale
  // tapes do not.
  for (auto& stream : streams_) stream.tape.clear();
  const auto windows = streaming_windows(stream_inputs_.front().size(), k);
  check(!windows.empty(), "run_epoch: K exceeds stream length");

  GradAccumulator total(theta_);
  GradAccumulator per_stream(theta_);
  double loss_sum = 0.0;

  for (const auto& w : windows) {
    total.zero();
    const double weight = 1.0 / cfg_.batch_streams;
    for (int i = 0; i < cfg_.batch_streams; ++i) {
      auto& stream = streams_[i];
      while (stream.tape.size() > static_cast<size_t>(k)) stream.tape.pop_front();
      WindowResult wr =
          forward_window(theta_, stream.carry, stream_inputs_[i].subspan(w.begin, w.end - w.begin),
                         stream_targets_[i].subspan(w.begin, w.end - w.begin), &stream.tape);
      for (double v : wr.losses) {
        if (!std::isfinite(v)) {
          throw TrainingDiverged("run_epoch: nonfinite loss at epoch " + std::to_string(n));
        }
        loss_sum += v;
      }
      bptt_into(per_stream, theta_, stream.tape, 2 * k, k);
      grad_axpy(total, per_stream, weight);
      st.loss_terms += static_cast<size_t>(k);
    }
    sgd_update(theta_, total, gamma_n, k);
    ++st.updates;
  }

  st.train_loss = loss_sum / static_cast<double>(st.loss_terms);
  const auto train_end = std::chrono::steady_clock::now();
  st.train_seconds = std::chrono::duration<double>(train_end - epoch_start).count();

  st.valid_ppl = evaluate_ppl(valid_);
  st.test_ppl = evaluate_ppl(test_);

  const auto epoch_end = std::chrono::steady_clock::now();
  st.wallclock_s = std::chrono::duration<double>(epoch_end - epoch_start).count();

  ++epoch_;
  history_.push_back(st);
  return st;
}

}  // namespace tbptt
