#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "buckopt/linalg.hpp"

using buckopt::SymmetricFactor;
using buckopt::factorize_symmetric;

namespace {

Eigen::MatrixXd random_orthogonal(int n, std::mt19937& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = g(rng);
  return Eigen::HouseholderQR<Eigen::MatrixXd>(A).householderQ();
}

} // namespace

TEST_CASE("identity factorizes with all-positive pivots", "[linalg]") {
  const SymmetricFactor f = factorize_symmetric(Eigen::MatrixXd::Identity(3, 3));
  CHECK(f.inertia().n_positive == 3);
  CHECK(f.inertia().n_negative == 0);
  CHECK(f.inertia().n_zero == 0);
  CHECK(f.log_abs_det() == 0.0);
  CHECK(f.min_pivot() == 1.0);
}

TEST_CASE("indefinite diagonal reports signed inertia and log|det|", "[linalg]") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 2);
  A(0, 0) = 2.0;
  A(1, 1) = -1.0;
  const SymmetricFactor f = factorize_symmetric(A);
  CHECK(f.inertia().n_positive == 1);
  CHECK(f.inertia().n_negative == 1);
  CHECK(f.inertia().n_zero == 0);
  CHECK(f.log_abs_det() == Catch::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(f.min_pivot() == -1.0);
  CHECK_FALSE(f.singular());
}

TEST_CASE("exactly singular matrix refuses to solve", "[linalg]") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 2);
  A(0, 0) = 1.0;
  const SymmetricFactor f = factorize_symmetric(A);
  CHECK(f.singular());
  CHECK(f.inertia().n_zero == 1);
  CHECK(f.log_abs_det() == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(f.solve(Eigen::VectorXd::Ones(2)), buckopt::SolveError);
}

TEST_CASE("solve matches a reference solver on SPD matrices", "[linalg]") {
  std::mt19937 rng(91);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial;
    Eigen::MatrixXd B(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) B(i, j) = g(rng);
    const Eigen::MatrixXd A = B.transpose() * B + Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd b(n);
    for (int i = 0; i < n; ++i) b(i) = g(rng);

    const SymmetricFactor f = factorize_symmetric(A);
    CHECK(f.inertia().n_positive == n);
    CHECK(f.inertia().n_zero == 0);
    const Eigen::VectorXd x = f.solve(b);
    const Eigen::VectorXd x_ref = A.ldlt().solve(b);
    REQUIRE((x - x_ref).norm() <= 1e-10 * (1.0 + x_ref.norm()));
  }
}

TEST_CASE("inertia and log|det| match a spectral oracle on indefinite matrices", "[linalg]") {
  std::mt19937 rng(1234);
  std::uniform_real_distribution<double> mag(0.1, 3.0);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 2 + trial % 12;
    const Eigen::MatrixXd Q = random_orthogonal(n, rng);
    Eigen::VectorXd eigs(n);
    int want_neg = 0;
    double want_logdet = 0.0;
    for (int i = 0; i < n; ++i) {
      const double m = mag(rng);
      const bool neg = coin(rng);
      eigs(i) = neg ? -m : m;
      want_neg += neg ? 1 : 0;
      want_logdet += std::log(m);
    }
    const Eigen::MatrixXd A = Q * eigs.asDiagonal() * Q.transpose();
    // Symmetrize exactly; the factorisation reads the lower triangle anyway.
    const SymmetricFactor f = factorize_symmetric(0.5 * (A + A.transpose()));

    CHECK(f.inertia().n_zero == 0);
    CHECK(f.inertia().n_negative == want_neg);
    CHECK(f.inertia().n_positive == n - want_neg);
    CHECK(f.inertia().n_positive + f.inertia().n_negative + f.inertia().n_zero == n);
    CHECK(f.log_abs_det() == Catch::Approx(want_logdet).epsilon(1e-9));

    Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(n, -1.0, 1.0);
    const Eigen::VectorXd x = f.solve(b);
    REQUIRE((A * x - b).norm() <= 1e-9 * b.norm() * eigs.cwiseAbs().maxCoeff() /
                                      eigs.cwiseAbs().minCoeff());
  }
}

TEST_CASE("multi-column solve equals columnwise solves", "[linalg]") {
  std::mt19937 rng(7);
  std::normal_distribution<double> g;
  const int n = 8;
  Eigen::MatrixXd B(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) B(i, j) = g(rng);
  const Eigen::MatrixXd A = B.transpose() * B + Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd R(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) R(i, j) = g(rng);

  const SymmetricFactor f = factorize_symmetric(A);
  const Eigen::MatrixXd X = f.solve(R);
  for (int j = 0; j < 3; ++j)
    CHECK((X.col(j) - f.solve(Eigen::VectorXd(R.col(j)))).norm() <= 1e-14 * X.col(j).norm());
}

TEST_CASE("non-square input is rejected", "[linalg]") {
  CHECK_THROWS_AS(factorize_symmetric(Eigen::MatrixXd::Zero(2, 3)), buckopt::InputError);
}
