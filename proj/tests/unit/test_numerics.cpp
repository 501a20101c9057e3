#include "dpodyn/power_iteration.hpp"
#include "dpodyn/rng.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace dpodyn;

TEST_CASE("counter rng is order independent") {
  CounterRng a(CounterRng::derive_key(5, 2));
  CounterRng b(CounterRng::derive_key(5, 2));
  std::vector<double> forward;
  for (int i = 0; i < 10; ++i) forward.push_back(a.next_uniform());
  for (int i = 9; i >= 0; --i) CHECK(b.uniform_at(i) == forward[i]);
  CHECK(CounterRng::derive_key(5, 2) != CounterRng::derive_key(5, 3));
  CHECK(CounterRng::derive_key(5, 2) != CounterRng::derive_key(6, 2));
}

TEST_CASE("uniforms stay in the open unit interval and normals look standard") {
  CounterRng rng(42);
  double sum = 0.0;
  double sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform_at(i);
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    const double z = rng.normal_at(i);
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 5.0 / std::sqrt(double(n)));
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("next_below covers its range") {
  CounterRng rng(3);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) ++hits[rng.next_below(7)];
  for (int h : hits) CHECK(h > 800);
}

TEST_CASE("power iteration matches a dense eigen solve") {
  CounterRng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 40;
    const int d = trial < 3 ? 10 : 90;  // both the d-space and the Gram route
    Matrix x(n, d);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) x(i, j) = rng.next_normal() * (j == 0 ? 3.0 : 1.0);
    }
    const Matrix centered = x.rowwise() - x.colwise().mean();
    const Matrix cov = centered.transpose() * centered / double(n - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
    const PowerIterationResult r = sample_covariance_norm(x);
    CHECK(r.converged);
    CHECK(r.value == doctest::Approx(solver.eigenvalues().maxCoeff()).epsilon(1e-6));
  }
}

TEST_CASE("zero data has zero covariance norm") {
  const PowerIterationResult r = sample_covariance_norm(Matrix::Ones(5, 3));
  CHECK(r.value == 0.0);
  CHECK(r.converged);
}
