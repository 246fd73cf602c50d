#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tbptt {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

  const double* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }
  double* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

// y = A x + b.  Throws std::invalid_argument on shape mismatch.
Vector affine(const Matrix& a, const Vector& x, const Vector& b);

// In-place kernels used on the hot paths.  `y` must already have A.rows entries.
void matvec_add(const Matrix& a, const double* x, double* y);         // y += A x
void matvec_transpose_add(const Matrix& a, const double* x, double* y);  // y += A^T x
void outer_add(Matrix& g, const double* u, const double* v);          // G += u v^T

double sigmoid(double v);

enum class Elementwise { Sigmoid, Tanh };
Vector elementwise(Elementwise f, const Vector& x);

struct XentResult {
  double loss = 0.0;
  Vector dlogits;  // softmax(logits) - onehot(target)
};

// Cross-entropy of softmax(logits) against a class index, with max-subtraction
// so large logits do not overflow.  Throws if target is out of range.
XentResult softmax_xent(const Vector& logits, int target);

double euclid_norm(std::span<const double> x);

inline void check(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace tbptt
