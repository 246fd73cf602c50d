#include "tbptt/tasks.hpp"

#include <algorithm>
#include <cmath>

#include "tbptt/numeric.hpp"

namespace tbptt {

LabeledSequence gen_copy(const CopyConfig& cfg) {
  check(cfg.data_symbols >= 1, "gen_copy: need at least one data symbol");
  check(cfg.m_low >= 1 && cfg.m_low <= cfg.m_high, "gen_copy: need 1 <= m_low <= m_high");
  check(cfg.total_tokens >= 2 * static_cast<size_t>(cfg.m_low),
        "gen_copy: total_tokens too small for one block");

  SeededRng rng(cfg.seed);
  LabeledSequence seq;
  seq.inputs.reserve(cfg.total_tokens);
  seq.targets.reserve(cfg.total_tokens);

  while (seq.inputs.size() < cfg.total_tokens) {
    const int m = cfg.m_low == cfg.m_high
                      ? cfg.m_low
                      : cfg.m_low + rng.uniform_int(cfg.m_high - cfg.m_low + 1);
    std::vector<int> data(m);
    for (int& d : data) d = rng.uniform_int(cfg.data_symbols);
    for (int j = 0; j < m; ++j) {
      seq.inputs.push_back(data[j]);
      seq.targets.push_back(cfg.blank());
    }
    seq.inputs.push_back(cfg.start_recall());
    seq.targets.push_back(data[0]);
    for (int j = 1; j < m; ++j) {
      seq.inputs.push_back(cfg.blank());
      seq.targets.push_back(data[j]);
    }
  }
  seq.inputs.resize(cfg.total_tokens);
  seq.targets.resize(cfg.total_tokens);
  return seq;
}

double perplexity(std::span<const double> losses) {
  check(!losses.empty(), "perplexity: empty loss sequence");
  double total = 0.0;
  for (double v : losses) {
    check(std::isfinite(v), "perplexity: nonfinite loss");
    total += v;
  }
  return std::exp(total / static_cast<double>(losses.size()));
}

double copy_min_ppl(const CopyConfig& cfg, int horizon) {
  double unpredictable = 0.0;
  double total = 0.0;
  for (int m = cfg.m_low; m <= cfg.m_high; ++m) {
    if (m > horizon) unpredictable += m;
    total += 2.0 * m;
  }
  const double mean_loss = std::log(cfg.data_symbols) * unpredictable / total;
  return std::exp(mean_loss);
}

BiasedLossOracle::BiasedLossOracle(const Config& cfg) : cfg_(cfg), rng_(cfg.seed) {
  check(cfg.dim >= 1, "testbed: dim must be positive");
  check(cfg.delta >= 0.0 && cfg.delta < 1.0, "testbed: delta must be in [0,1)");
  check(cfg.sigma >= 0.0, "testbed: sigma must be nonnegative");
  check(cfg.amp * cfg.freq * cfg.freq < 1.0, "testbed: need amp*freq^2 < 1");
}

double BiasedLossOracle::loss(std::span<const double> theta) const {
  double acc = 0.0;
  for (double t : theta) acc += 0.5 * t * t + cfg_.amp * std::cos(cfg_.freq * t);
  return acc;
}

void BiasedLossOracle::gradient(std::span<const double> theta, std::span<double> out) const {
  for (size_t i = 0; i < theta.size(); ++i) {
    out[i] = theta[i] - cfg_.amp * cfg_.freq * std::sin(cfg_.freq * theta[i]);
  }
}

void BiasedLossOracle::biased_gradient(std::span<const double> theta, std::span<double> out) {
  gradient(theta, out);
  const double shrink = 1.0 - cfg_.delta;
  for (size_t i = 0; i < theta.size(); ++i) {
    out[i] = shrink * out[i] + cfg_.sigma * rng_.normal();
  }
}

BiasedSgdResult run_biased_sgd(BiasedLossOracle& oracle, std::span<const double> theta0,
                               TestbedSchedule schedule, double gamma, int steps) {
  check(gamma > 0.0, "run_biased_sgd: gamma must be positive");
  check(steps >= 1, "run_biased_sgd: need at least one step");
  const auto& cfg = oracle.config();
  check(theta0.size() == static_cast<size_t>(cfg.dim), "run_biased_sgd: theta0 dim mismatch");

  const double cap = (1.0 - cfg.delta) / (oracle.lipschitz() * (1.0 + cfg.delta) * (1.0 + cfg.delta));

  std::vector<double> theta(theta0.begin(), theta0.end());
  std::vector<double> g(cfg.dim), ghat(cfg.dim);

  BiasedSgdResult r;
  r.d_loss = oracle.loss(theta) - oracle.min_loss();
  r.grad_norm_sq.reserve(steps + 1);

  double sum_gamma = 0.0, sum_gamma_sq = 0.0;
  for (int n = 1; n <= steps; ++n) {
    oracle.gradient(theta, g);
    double gsq = 0.0;
    for (double v : g) gsq += v * v;
    r.grad_norm_sq.push_back(gsq);

    const double gamma_n =
        schedule == TestbedSchedule::Constant ? gamma : gamma / std::sqrt(static_cast<double>(n));
    if (gamma_n > cap) r.stepsize_warning = true;
    sum_gamma += gamma_n;
    sum_gamma_sq += gamma_n * gamma_n;

    oracle.biased_gradient(theta, ghat);
    for (int i = 0; i < cfg.dim; ++i) theta[i] -= gamma_n * ghat[i];
  }
  oracle.gradient(theta, g);
  double gsq = 0.0;
  for (double v : g) gsq += v * v;
  r.grad_norm_sq.push_back(gsq);

  r.min_grad_norm_sq = *std::min_element(r.grad_norm_sq.begin(), r.grad_norm_sq.end());
  const double l = oracle.lipschitz();
  const double var = oracle.variance_bound();
  r.bound_general =
      (2.0 * r.d_loss + l * var * sum_gamma_sq) / ((1.0 - cfg.delta) * sum_gamma);
  r.bound_optimal =
      std::sqrt(8.0 * r.d_loss * l * var / static_cast<double>(steps)) / (1.0 - cfg.delta);
  return r;
}

double optimal_testbed_stepsize(const BiasedLossOracle& oracle,
                                std::span<const double> theta0, int steps) {
  const double d_loss = oracle.loss(theta0) - oracle.min_loss();
  const double var = oracle.variance_bound();
  check(var > 0.0, "optimal_testbed_stepsize: needs sigma > 0");
  return std::sqrt(2.0 * d_loss / (steps * oracle.lipschitz() * var));
}

}  // namespace tbptt
