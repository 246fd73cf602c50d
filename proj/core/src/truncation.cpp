#include "tbptt/truncation.hpp"

#include <cmath>
#include <fstream>

#include "tbptt/checkpoint.hpp"

namespace tbptt {

MeanProfile mean_profile(const GradNormProfile& p) {
  check(!p.phi.empty(), "mean_profile: empty profile");
  MeanProfile mp;
  mp.samples = static_cast<int>(p.phi.size());
  mp.mean_phi.assign(p.window + 1, 0.0);
  for (const auto& row : p.phi) {
    check(row.size() == mp.mean_phi.size(), "mean_profile: ragged profile");
    for (size_t k = 0; k < row.size(); ++k) mp.mean_phi[k] += row[k];
  }
  for (double& v : mp.mean_phi) v /= mp.samples;
  return mp;
}

int default_tau(int window) { return (9 * window) / 10; }

namespace {

// Log-profile over [tau, window]; empty when any mean is nonpositive.
std::vector<double> log_window(const MeanProfile& mp, int tau) {
  check(tau >= 0 && tau < mp.window(), "estimate_beta: need tau in [0, window)");
  std::vector<double> logs;
  logs.reserve(mp.window() - tau + 1);
  for (int k = tau; k <= mp.window(); ++k) {
    if (mp.mean_phi[k] <= 0.0) return {};
    logs.push_back(std::log(mp.mean_phi[k]));
  }
  return logs;
}

DecayEstimate finish(double slope, int tau, DecayMethod method) {
  DecayEstimate de;
  de.tau = tau;
  de.method = method;
  de.beta = std::exp(slope);
  de.no_decay = !(de.beta < 1.0);
  return de;
}

DecayEstimate no_decay(int tau, DecayMethod method) {
  DecayEstimate de;
  de.tau = tau;
  de.method = method;
  de.no_decay = true;
  return de;
}

}  // namespace

DecayEstimate estimate_beta_max(const MeanProfile& mp, int tau) {
  const auto logs = log_window(mp, tau);
  if (logs.empty()) return no_decay(tau, DecayMethod::MaxSlope);
  double steepest = -kInf;
  for (size_t a = 0; a < logs.size(); ++a) {
    for (size_t b = a + 1; b < logs.size(); ++b) {
      steepest = std::max(steepest, (logs[b] - logs[a]) / static_cast<double>(b - a));
    }
  }
  return finish(steepest, tau, DecayMethod::MaxSlope);
}

DecayEstimate estimate_beta_regression(const MeanProfile& mp, int tau) {
  const auto logs = log_window(mp, tau);
  if (logs.empty()) return no_decay(tau, DecayMethod::Regression);
  const double n = static_cast<double>(logs.size());
  double mean_x = 0.0, mean_y = 0.0;
  for (size_t i = 0; i < logs.size(); ++i) {
    mean_x += static_cast<double>(i);
    mean_y += logs[i];
  }
  mean_x /= n;
  mean_y /= n;
  double sxy = 0.0, sxx = 0.0;
  for (size_t i = 0; i < logs.size(); ++i) {
    const double dx = static_cast<double>(i) - mean_x;
    sxy += dx * (logs[i] - mean_y);
    sxx += dx * dx;
  }
  return finish(sxy / sxx, tau, DecayMethod::Regression);
}

DecayEstimate estimate_beta(const MeanProfile& mp, int tau, DecayMethod method) {
  return method == DecayMethod::MaxSlope ? estimate_beta_max(mp, tau)
                                         : estimate_beta_regression(mp, tau);
}

double absolute_bias_bound(const MeanProfile& mp, const DecayEstimate& de, int k) {
  if (de.no_decay) return kInf;
  check(k >= 0, "absolute_bias_bound: negative K");
  const double tail = mp.mean_phi[de.tau] / (1.0 - de.beta);
  if (k >= de.tau) return tail * std::pow(de.beta, k - de.tau);
  double head = 0.0;
  for (int j = k + 1; j <= de.tau - 1; ++j) head += mp.mean_phi[j];
  return head + tail;
}

double relative_bias_bound(const MeanProfile& mp, const DecayEstimate& de, int k) {
  if (de.no_decay) return kInf;
  double proxy = 0.0;
  double denom = -kInf;
  for (int j = 0; j <= k; ++j) {
    proxy += mp.mean_phi[j];
    denom = std::max(denom, proxy - absolute_bias_bound(mp, de, j));
  }
  if (!(denom > 0.0)) return kInf;
  return absolute_bias_bound(mp, de, k) / denom;
}

BiasBoundTable bias_bound_table(const MeanProfile& mp, const DecayEstimate& de) {
  const int r = mp.window();
  BiasBoundTable t;
  t.beta = de.beta;
  t.tau = de.tau;
  t.no_decay = de.no_decay;
  t.e_hat.resize(r + 1);
  t.delta_hat.resize(r + 1);
  t.proxy.resize(r + 1);
  double proxy = 0.0;
  double denom = -kInf;
  for (int k = 0; k <= r; ++k) {
    proxy += mp.mean_phi[k];
    t.proxy[k] = proxy;
    t.e_hat[k] = absolute_bias_bound(mp, de, k);
    denom = std::max(denom, proxy - t.e_hat[k]);
    t.delta_hat[k] = (de.no_decay || !(denom > 0.0)) ? kInf : t.e_hat[k] / denom;
  }
  return t;
}

TruncationSelection select_truncation(const BiasBoundTable& table, double delta, int k_min,
                                      int k_max) {
  check(delta > 0.0 && delta < 1.0, "select_truncation: delta must be in (0,1)");
  check(k_min >= 1 && k_min <= k_max, "select_truncation: need 1 <= k_min <= k_max");
  check(k_max <= table.window(), "select_truncation: k_max exceeds table window");
  TruncationSelection sel;
  sel.delta_target = delta;
  for (int k = k_min; k <= k_max; ++k) {
    if (table.delta_hat[k] < delta) {
      sel.k = k;
      return sel;
    }
  }
  sel.k = k_max;
  sel.clamped = true;
  return sel;
}

void write_bias_bound_csv(const std::string& path, const BiasBoundTable& table) {
  std::ofstream out(path);
  check(out.good(), "write_bias_bound_csv: cannot open " + path);
  out << "K,E_hat,Delta_hat,proxy_norm\n";
  for (int k = 0; k <= table.window(); ++k) {
    out << k << ',' << format_double(table.e_hat[k]) << ',' << format_double(table.delta_hat[k])
        << ',' << format_double(table.proxy[k]) << '\n';
  }
  check(out.good(), "write_bias_bound_csv: write failed for " + path);
}

}  // namespace tbptt
