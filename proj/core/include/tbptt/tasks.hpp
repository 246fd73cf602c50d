#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tbptt/rng.hpp"

namespace tbptt {

// Symbol-copy task.  Alphabet: tokens 0..I-1 are data, I is blank, I+1 is
// start-recall.  Each block's input is m data symbols, start-recall, m-1
// blanks; the target is m blanks followed by the same m data symbols.
struct CopyConfig {
  int data_symbols = 6;  // I
  int m_low = 10;
  int m_high = 10;
  size_t total_tokens = 0;
  uint64_t seed = 0;

  int blank() const { return data_symbols; }
  int start_recall() const { return data_symbols + 1; }
  int vocab() const { return data_symbols + 2; }
};

struct LabeledSequence {
  std::vector<int> inputs;
  std::vector<int> targets;
  size_t length() const { return inputs.size(); }
};

// Concatenates blocks (m drawn uniformly on [m_low, m_high] per block) and
// truncates to exactly total_tokens.
LabeledSequence gen_copy(const CopyConfig& cfg);

// exp(mean loss); throws on empty input.
double perplexity(std::span<const double> losses);

// Lowest achievable PPL for a predictor whose memory spans `horizon` input
// lags: recall positions need exactly lag m, so blocks with m > horizon
// contribute m unpredictable symbols out of 2m.
double copy_min_ppl(const CopyConfig& cfg, int horizon);

// Smooth testbed loss with an analytically known gradient-Lipschitz constant:
//   f(theta) = 1/2 ||theta||^2 + amp * sum_i cos(freq * theta_i)
// With amp*freq^2 < 1 the curvature stays in [1 - amp*freq^2, 1 + amp*freq^2],
// so L = 1 + amp*freq^2 and the unique stationary point is the origin.
// Sampled gradients carry an exact relative bias:
//   ghat = (1 - delta) g + sigma * xi,   xi ~ N(0, I)
// giving ||E ghat - g|| = delta ||g|| and E||ghat - E ghat||^2 = sigma^2 * dim.
class BiasedLossOracle {
 public:
  struct Config {
    int dim = 20;
    double amp = 0.25;
    double freq = 1.4142135623730951;  // sqrt(2)
    double delta = 0.0;
    double sigma = 0.0;
    uint64_t seed = 0;
  };

  explicit BiasedLossOracle(const Config& cfg);

  double loss(std::span<const double> theta) const;
  void gradient(std::span<const double> theta, std::span<double> out) const;
  void biased_gradient(std::span<const double> theta, std::span<double> out);

  double lipschitz() const { return 1.0 + cfg_.amp * cfg_.freq * cfg_.freq; }
  double min_loss() const { return cfg_.dim * cfg_.amp; }  // f at the origin
  double variance_bound() const { return cfg_.sigma * cfg_.sigma * cfg_.dim; }
  const Config& config() const { return cfg_; }

 private:
  Config cfg_;
  SeededRng rng_;
};

enum class TestbedSchedule { Constant, InverseSqrt };

struct BiasedSgdResult {
  std::vector<double> grad_norm_sq;  // ||g(theta_n)||^2 along the trajectory
  double min_grad_norm_sq = 0.0;
  double bound_general = 0.0;   // (2 D_L + L sigma^2 sum gamma^2) / ((1-delta) sum gamma)
  double bound_optimal = 0.0;   // (1/(1-delta)) sqrt(8 D_L L sigma^2 / N)
  double d_loss = 0.0;          // f(theta_0) - min f
  bool stepsize_warning = false;  // some gamma_n exceeded (1-delta)/(L(1+delta)^2)
};

// theta_{n+1} = theta_n - gamma_n * ghat(theta_n) for n = 1..steps, recording
// the exact gradient norm at every iterate (theta_1 through theta_{N+1}).
BiasedSgdResult run_biased_sgd(BiasedLossOracle& oracle, std::span<const double> theta0,
                               TestbedSchedule schedule, double gamma, int steps);

// The constant stepsize minimizing the general bound for a fixed step count.
double optimal_testbed_stepsize(const BiasedLossOracle& oracle,
                                std::span<const double> theta0, int steps);

}  // namespace tbptt
