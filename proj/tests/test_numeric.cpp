#include <doctest.h>

#include <cmath>

#include "tbptt/numeric.hpp"
#include "tbptt/rng.hpp"

using namespace tbptt;

namespace {

Matrix random_matrix(int r, int c, SeededRng& rng) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(-2.0, 2.0);
  return m;
}

Vector random_vector(int n, SeededRng& rng) {
  Vector v(n);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

}  // namespace

TEST_CASE("affine identity and zero cases") {
  Vector x{1.0, 2.0};
  CHECK(affine(Matrix::identity(2), x, Vector{0.0, 0.0}) == Vector{1.0, 2.0});

  Matrix zero(2, 2);
  CHECK(affine(zero, x, Vector{3.0, 4.0}) == Vector{3.0, 4.0});
}

TEST_CASE("affine hand-computed example") {
  Matrix a(2, 2);
  a(0, 0) = 1;
  a(0, 1) = 2;
  a(1, 0) = 3;
  a(1, 1) = 4;
  Vector y = affine(a, Vector{1.0, 1.0}, Vector{0.0, 0.0});
  CHECK(y[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("affine rejects mismatched shapes") {
  Matrix a(2, 3);
  CHECK_THROWS_AS(affine(a, Vector{1.0, 2.0}, Vector{0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(affine(a, Vector{1.0, 2.0, 3.0}, Vector{0.0}), std::invalid_argument);
}

TEST_CASE("affine is linear in x") {
  SeededRng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int r = 1 + rng.uniform_int(5);
    const int c = 1 + rng.uniform_int(5);
    Matrix a = random_matrix(r, c, rng);
    Vector x = random_vector(c, rng);
    Vector y = random_vector(c, rng);
    const double alpha = rng.uniform(-3.0, 3.0);
    const double beta = rng.uniform(-3.0, 3.0);
    Vector zero(r, 0.0);

    Vector combo(c);
    for (int i = 0; i < c; ++i) combo[i] = alpha * x[i] + beta * y[i];
    Vector lhs = affine(a, combo, zero);
    Vector ax = affine(a, x, zero);
    Vector ay = affine(a, y, zero);
    for (int i = 0; i < r; ++i) {
      CHECK(lhs[i] == doctest::Approx(alpha * ax[i] + beta * ay[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("elementwise nonlinearities") {
  Vector z{0.0};
  CHECK(elementwise(Elementwise::Sigmoid, z)[0] == doctest::Approx(0.5));
  CHECK(elementwise(Elementwise::Tanh, z)[0] == doctest::Approx(0.0));

  CHECK(std::abs(sigmoid(20.0) - 1.0) < 1e-8);
  CHECK(std::abs(sigmoid(-20.0) - 0.0) < 1e-8);
}

TEST_CASE("softmax_xent uniform and saturated logits") {
  const int v = 7;
  Vector uniform(v, 0.3);
  XentResult r = softmax_xent(uniform, 4);
  CHECK(r.loss == doctest::Approx(std::log(static_cast<double>(v))).epsilon(1e-12));

  Vector saturated(v, 0.0);
  saturated[2] = 1e6;
  CHECK(softmax_xent(saturated, 2).loss == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax_xent rejects out-of-range target") {
  Vector logits(4, 0.0);
  CHECK_THROWS_AS(softmax_xent(logits, 4), std::invalid_argument);
  CHECK_THROWS_AS(softmax_xent(logits, -1), std::invalid_argument);
}

TEST_CASE("softmax_xent gradient matches central differences") {
  SeededRng rng(11);
  Vector logits = random_vector(5, rng);
  const int target = 2;
  XentResult r = softmax_xent(logits, target);

  const double eps = 1e-5;
  for (int i = 0; i < 5; ++i) {
    Vector up = logits, down = logits;
    up[i] += eps;
    down[i] -= eps;
    const double fd = (softmax_xent(up, target).loss - softmax_xent(down, target).loss) / (2 * eps);
    const double denom = std::max({std::abs(fd), std::abs(r.dlogits[i]), 1e-8});
    CHECK(std::abs(fd - r.dlogits[i]) / denom < 1e-7);
  }
}

TEST_CASE("softmax_xent gradient sums to zero") {
  SeededRng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const int v = 2 + rng.uniform_int(8);
    Vector logits = random_vector(v, rng);
    XentResult r = softmax_xent(logits, rng.uniform_int(v));
    double total = 0.0;
    for (double g : r.dlogits) total += g;
    CHECK(std::abs(total) < 1e-12);
  }
}

TEST_CASE("euclid_norm examples and naive oracle") {
  CHECK(euclid_norm(Vector{}) == 0.0);
  CHECK(euclid_norm(Vector{0.0, 0.0}) == 0.0);
  CHECK(euclid_norm(Vector{3.0, 4.0}) == doctest::Approx(5.0).epsilon(1e-15));

  SeededRng rng(17);
  Vector x = random_vector(128, rng);
  double acc = 0.0;
  for (double v : x) acc += v * v;
  CHECK(euclid_norm(x) == doctest::Approx(std::sqrt(acc)).epsilon(1e-12));
}

TEST_CASE("SeededRng: equal seeds give equal streams") {
  SeededRng a(123456789), b(123456789);
  for (int i = 0; i < 10000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  SeededRng c(1), d(2);
  bool all_equal = true;
  for (int i = 0; i < 100; ++i) all_equal &= c.next_u64() == d.next_u64();
  CHECK_FALSE(all_equal);
}

TEST_CASE("SeededRng: uniform stays in range, uniform_int unbiased-ish") {
  SeededRng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  int counts[5] = {0, 0, 0, 0, 0};
  for (int i = 0; i < 50000; ++i) counts[rng.uniform_int(5)]++;
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("SeededRng: normal has roughly standard moments") {
  SeededRng rng(99);
  const int n = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sumsq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sumsq / n - 1.0) < 0.02);
}
