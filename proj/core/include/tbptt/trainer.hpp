#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tbptt/backprop.hpp"
#include "tbptt/truncation.hpp"

namespace tbptt {

enum class TrainMode { Adaptive, Fixed };
enum class StepSchedule { Constant, InverseSqrt };

struct TrainConfig {
  TrainMode mode = TrainMode::Adaptive;
  double delta = 0.9;  // relative-bias tolerance (adaptive mode)
  int fixed_k = 15;    // truncation length (fixed mode)

  double gamma = 1.0;
  StepSchedule schedule = StepSchedule::Constant;

  int batch_streams = 64;   // S: parallel streams and profiling batch size
  int profile_window = 100; // R
  int k0 = 15;
  int k_min = 2;
  int k_max = 100;
  int epochs = 25;
  int adapt_period = 1;  // epochs between truncation adaptations
  DecayMethod beta_method = DecayMethod::Regression;
  int tau = -1;  // profile onset; -1 selects floor(9/10 * R)
  uint64_t seed = 0;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Throws std::invalid_argument naming the violated constraint.
void validate(const TrainConfig& cfg);

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SequenceData {
  std::vector<int> inputs;
  std::vector<int> targets;
  size_t length() const { return inputs.size(); }
};

// Contiguous equal-length chunks; the remainder is dropped.
std::vector<std::span<const int>> partition_streams(std::span<const int> tokens, int s);

struct WindowRange {
  size_t begin = 0;
  size_t end = 0;  // exclusive
};

// Tiles [0, stream_len) into windows of k steps, dropping a trailing partial
// window.
std::vector<WindowRange> streaming_windows(size_t stream_len, int k);

// theta -= gamma_n * sqrt(k_n) * ghat.  Throws TrainingDiverged on a
// nonfinite gradient.
void sgd_update(ModelParams& theta, GradAccumulator& ghat, double gamma_n, int k_n);

// n is the 1-based epoch index.
double stepsize(int n, const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;  // 1-based
  int k_used = 0;
  double beta_hat = std::numeric_limits<double>::quiet_NaN();
  double delta_hat_at_k = std::numeric_limits<double>::quiet_NaN();
  bool clamped = false;
  double train_loss = 0.0;
  double valid_ppl = 0.0;
  double test_ppl = 0.0;
  double wallclock_s = 0.0;
  // Bookkeeping outside the CSV schema.
  size_t loss_terms = 0;
  size_t updates = 0;
  double train_seconds = 0.0;
};

struct AdaptationEvent {
  int epoch = 0;
  GradNormProfile profile;
  BiasBoundTable table;
  TruncationSelection selection;
};

void write_epoch_csv_header(std::ostream& out);
void write_epoch_csv_row(std::ostream& out, const EpochStats& st, TrainMode mode);

// Streaming TBPTT driver.  Hidden states carry across windows and epochs;
// window tiling and tapes restart at each epoch boundary.  Every update
// backpropagates the window's k losses over up to 2k recorded steps, so each
// loss sees at least k lags except near a stream head.
class Trainer {
 public:
  Trainer(ModelParams theta, TrainConfig cfg, SequenceData train, SequenceData valid,
          SequenceData test);

  EpochStats run_epoch();

  // Profiles the current parameters and selects a truncation; records and
  // returns the event.  Called automatically by run_epoch in adaptive mode.
  const AdaptationEvent& adapt_truncation();

  const ModelParams& params() const { return theta_; }
  ModelParams& params() { return theta_; }
  int epochs_run() const { return epoch_; }
  int current_k() const { return current_k_; }
  const std::vector<AdaptationEvent>& adaptation_events() const { return events_; }
  const std::vector<EpochStats>& history() const { return history_; }

  double evaluate_ppl(const SequenceData& data) const;

 private:
  ModelParams theta_;
  TrainConfig cfg_;
  SequenceData train_, valid_, test_;
  std::vector<std::span<const int>> stream_inputs_, stream_targets_;

  struct StreamState {
    HiddenStates carry;
    Tape tape;
  };
  std::vector<StreamState> streams_;

  SeededRng profile_rng_;
  int epoch_ = 0;
  int current_k_ = 0;
  double last_beta_ = std::numeric_limits<double>::quiet_NaN();
  double last_delta_hat_ = std::numeric_limits<double>::quiet_NaN();
  bool last_clamped_ = false;
  std::vector<AdaptationEvent> events_;
  std::vector<EpochStats> history_;
};

}  // namespace tbptt
