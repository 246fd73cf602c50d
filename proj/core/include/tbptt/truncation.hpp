#pragma once

#include <limits>
#include <string>
#include <vector>

#include "tbptt/backprop.hpp"

namespace tbptt {

// Minibatch mean of the gradient-norm profile, per lag.
struct MeanProfile {
  std::vector<double> mean_phi;  // index = lag, length window + 1
  int samples = 0;
  int window() const { return static_cast<int>(mean_phi.size()) - 1; }
};

MeanProfile mean_profile(const GradNormProfile& p);

enum class DecayMethod { MaxSlope, Regression };

// Estimated geometric decay of the mean profile on [tau, window].
// `no_decay` is set when the log-profile is undefined (nonpositive means) or
// the estimated rate is >= 1; callers fall back to K_max in that case.
struct DecayEstimate {
  double beta = 1.0;
  int tau = 0;
  DecayMethod method = DecayMethod::Regression;
  bool no_decay = false;
};

// Default onset: floor(9/10 * window).
int default_tau(int window);

// beta = exp of the steepest pairwise slope of log mean_phi over
// tau <= k < k' <= window.  A sound upper-bound estimate, but a single noisy
// pair can determine it.
DecayEstimate estimate_beta_max(const MeanProfile& mp, int tau);

// beta = exp of the OLS slope of log mean_phi against the lag on
// [tau, window]; algebraically the (k'-k)^2-weighted average of all pairwise
// slopes.  Less variable under noise, not a guaranteed bound.
DecayEstimate estimate_beta_regression(const MeanProfile& mp, int tau);

DecayEstimate estimate_beta(const MeanProfile& mp, int tau, DecayMethod method);

// Estimated absolute-bias bound (geometric tail sum of the mean profile):
//   K >= tau:  mean_phi[tau] * beta^(K-tau) / (1-beta)
//   K <  tau:  sum_{k=K+1}^{tau-1} mean_phi[k] + mean_phi[tau] / (1-beta)
// +inf when no decay was found.
double absolute_bias_bound(const MeanProfile& mp, const DecayEstimate& de, int k);

// Estimated relative-bias bound: E(K) / max_{k<=K}(proxy(k) - E(k)) where
// proxy(k) = sum_{j<=k} mean_phi[j] stands in for the gradient magnitude.
// +inf when the denominator is nonpositive.
double relative_bias_bound(const MeanProfile& mp, const DecayEstimate& de, int k);

struct BiasBoundTable {
  std::vector<double> e_hat;      // index = K
  std::vector<double> delta_hat;  // index = K
  std::vector<double> proxy;      // cumulative mean_phi
  double beta = 1.0;
  int tau = 0;
  bool no_decay = false;
  int window() const { return static_cast<int>(e_hat.size()) - 1; }
};

BiasBoundTable bias_bound_table(const MeanProfile& mp, const DecayEstimate& de);

struct TruncationSelection {
  int k = 0;
  double delta_target = 0.0;
  bool clamped = false;  // no K in range met the tolerance; K_max used
};

// Smallest K in [k_min, k_max] with delta_hat(K) < delta; K_max (clamped)
// when none qualifies.
TruncationSelection select_truncation(const BiasBoundTable& table, double delta, int k_min,
                                      int k_max);

// CSV dump with header K,E_hat,Delta_hat,proxy_norm.
void write_bias_bound_csv(const std::string& path, const BiasBoundTable& table);

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace tbptt
