#include "tbptt/numeric.hpp"

#include <algorithm>
#include <cmath>

namespace tbptt {

Vector affine(const Matrix& a, const Vector& x, const Vector& b) {
  check(a.cols == static_cast<int>(x.size()), "affine: A.cols != x.dim");
  check(a.rows == static_cast<int>(b.size()), "affine: b.dim != A.rows");
  Vector y = b;
  matvec_add(a, x.data(), y.data());
  return y;
}

void matvec_add(const Matrix& a, const double* x, double* y) {
  const double* row = a.data.data();
  for (int i = 0; i < a.rows; ++i) {
    double acc = 0.0;
    for (int j = 0; j < a.cols; ++j) acc += row[j] * x[j];
    y[i] += acc;
    row += a.cols;
  }
}

void matvec_transpose_add(const Matrix& a, const double* x, double* y) {
  const double* row = a.data.data();
  for (int i = 0; i < a.rows; ++i) {
    const double xi = x[i];
    for (int j = 0; j < a.cols; ++j) y[j] += row[j] * xi;
    row += a.cols;
  }
}

void outer_add(Matrix& g, const double* u, const double* v) {
  double* row = g.data.data();
  for (int i = 0; i < g.rows; ++i) {
    const double ui = u[i];
    for (int j = 0; j < g.cols; ++j) row[j] += ui * v[j];
    row += g.cols;
  }
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

Vector elementwise(Elementwise f, const Vector& x) {
  Vector y(x.size());
  if (f == Elementwise::Sigmoid) {
    for (size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  } else {
    for (size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  }
  return y;
}

XentResult softmax_xent(const Vector& logits, int target) {
  check(target >= 0 && target < static_cast<int>(logits.size()),
        "softmax_xent: target out of range");
  const double vmax = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  XentResult r;
  r.dlogits.resize(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    r.dlogits[i] = std::exp(logits[i] - vmax);
    z += r.dlogits[i];
  }
  // loss = log(sum exp(l - max)) - (l[target] - max)
  r.loss = std::log(z) - (logits[target] - vmax);
  const double inv_z = 1.0 / z;
  for (size_t i = 0; i < logits.size(); ++i) r.dlogits[i] *= inv_z;
  r.dlogits[target] -= 1.0;
  return r;
}

double euclid_norm(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace tbptt
