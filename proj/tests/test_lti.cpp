#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace activeid;
using namespace testing_support;

namespace {

struct ZeroNoise {
  double normal() { return 0.0; }
};

Scenario pair_scenario() {
  Matrix a(2, 2);
  a << 0.5, 0.1, 0.0, 0.3;
  Matrix b(2, 1);
  b << 0.0, 1.0;
  Matrix a1 = a;
  a1(0, 1) = 0.2;
  return Scenario({LinearSystem(a, b), LinearSystem(a1, b)}, NoiseModel::isotropic(2, 1.0), 1.0);
}

}  // namespace

TEST(LinearSystem, RejectsMismatchedShapes) {
  EXPECT_THROW(LinearSystem(Matrix::Zero(2, 3), Matrix::Zero(2, 1)), DimensionError);
  EXPECT_THROW(LinearSystem(Matrix::Zero(2, 2), Matrix::Zero(3, 1)), DimensionError);
  const LinearSystem s(Matrix::Zero(3, 3), Matrix::Zero(3, 2));
  EXPECT_EQ(s.n_x(), 3);
  EXPECT_EQ(s.n_u(), 2);
}

TEST(NoiseModel, RequiresSymmetricPositiveDefinite) {
  Matrix asym(2, 2);
  asym << 1.0, 0.5, 0.0, 1.0;
  EXPECT_THROW(NoiseModel{asym}, std::invalid_argument);
  Matrix indef(2, 2);
  indef << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(NoiseModel{indef}, std::invalid_argument);
  Rng rng(3);
  const Matrix s = random_spd(rng, 3);
  const NoiseModel n(s);
  EXPECT_LT((n.chol() * n.chol().transpose() - s).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((n.inv() * s - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
  const Vector r = randn(rng, 3);
  EXPECT_NEAR(n.weighted_norm2(r), r.dot(s.ldlt().solve(r)), 1e-12);
}

TEST(Scenario, ValidatesClass) {
  const LinearSystem s(Matrix::Identity(2, 2), Matrix::Ones(2, 1));
  const NoiseModel n = NoiseModel::isotropic(2, 1.0);
  EXPECT_THROW(Scenario({s}, n, 1.0), std::invalid_argument);
  EXPECT_THROW(Scenario({s, s}, n, 1.0), std::invalid_argument);
  const LinearSystem t(0.5 * Matrix::Identity(2, 2), Matrix::Ones(2, 1));
  EXPECT_THROW(Scenario({s, t}, n, 0.0), std::invalid_argument);
  EXPECT_THROW(Scenario({s, t}, n, 1.0, 2), std::invalid_argument);
  EXPECT_THROW(Scenario({s, LinearSystem(Matrix::Identity(2, 2), Matrix::Ones(2, 2))}, n, 1.0), DimensionError);
  EXPECT_THROW(Scenario({s, t}, NoiseModel::isotropic(3, 1.0), 1.0), DimensionError);
  const Scenario ok({s, t}, n, 2.0, 1);
  EXPECT_EQ(ok.alternatives(), 1u);
  EXPECT_EQ(&ok.truth(), &ok.system(1));
}

TEST(Simulate, NoiselessRecursion) {
  const Scenario sc = pair_scenario();
  Matrix u(1, 3);
  u << 1.0, -2.0, 0.5;
  Vector x0(2);
  x0 << 1.0, 1.0;
  ZeroNoise z;
  const Trajectory tr = simulate(sc.truth(), sc.noise(), u, x0, z);
  Vector x = x0;
  for (int t = 0; t < 3; ++t) {
    x = sc.truth().A() * x + sc.truth().B() * u.col(t);
    EXPECT_LT((tr.states.col(t + 1) - x).norm(), 1e-15);
  }
  EXPECT_EQ(tr.length(), 3);
}

TEST(Simulate, RejectsBadInputs) {
  const Scenario sc = pair_scenario();
  Rng rng(1);
  EXPECT_THROW(simulate(sc.truth(), sc.noise(), Matrix::Zero(2, 3), Vector::Zero(2), rng), DimensionError);
  EXPECT_THROW(simulate(sc.truth(), sc.noise(), Matrix::Zero(1, 3), Vector::Zero(3), rng), DimensionError);
  EXPECT_THROW(simulate(sc.truth(), sc.noise(), Matrix::Zero(1, 0), Vector::Zero(2), rng), std::invalid_argument);
}

// One step from a fixed state: mean A x0 + B u, covariance sigma_w.
TEST(Simulate, OneStepMomentsMatchNoiseModel) {
  Rng gen(11);
  const Matrix sw = random_spd(gen, 3);
  const LinearSystem sys(random_stable(gen, 3), randn(gen, 3, 2));
  const NoiseModel noise(sw);
  const Vector x0 = randn(gen, 3);
  const Matrix u = randn(gen, 2, 1);
  const Vector mean = sys.A() * x0 + sys.B() * u.col(0);

  Rng rng(12);
  const int n = 100000;
  Vector s1 = Vector::Zero(3);
  Matrix s2 = Matrix::Zero(3, 3);
  for (int k = 0; k < n; ++k) {
    const Vector d = simulate(sys, noise, u, x0, rng).states.col(1) - mean;
    s1 += d;
    s2 += d * d.transpose();
  }
  s1 /= n;
  s2 /= n;
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(s1(i), 0.0, 3.0 * std::sqrt(sw(i, i) / n));
    for (int j = 0; j < 3; ++j) {
      const double se = std::sqrt((sw(i, i) * sw(j, j) + sw(i, j) * sw(i, j)) / n);
      EXPECT_NEAR(s2(i, j), sw(i, j), 3.5 * se) << i << "," << j;
    }
  }
}

// At the truth the residuals are the whitened noise: chi-squared with n_x T
// degrees of freedom.
TEST(PredictionError, ChiSquaredAtTruth) {
  Rng gen(5);
  const Scenario sc = random_scenario(gen, 3, 2, 1);
  const int T = 4;
  const Matrix u = randn(gen, 2, T);
  Rng rng(6);
  Welford mean;
  Welford sq;
  for (int k = 0; k < 100000; ++k) {
    const double e = prediction_error(simulate(sc.truth(), sc.noise(), u, Vector::Zero(3), rng), sc.truth(), sc.noise());
    mean.add(e);
    sq.add((e - 12.0) * (e - 12.0));
  }
  EXPECT_NEAR(mean.result().mean, 12.0, 3.0 * mean.result().se);
  EXPECT_NEAR(sq.result().mean, 24.0, 3.0 * sq.result().se);
}

TEST(PredictionError, AdditiveOverSegments) {
  Rng gen(8);
  const Scenario sc = random_scenario(gen, 2, 2, 2);
  Rng rng(9);
  const Matrix u = randn(gen, 2, 10);
  const Trajectory tr = simulate(sc.truth(), sc.noise(), u, randn(gen, 2), rng);
  for (std::size_t i = 0; i < sc.size(); ++i) {
    const double whole = prediction_error(tr, sc.system(i), sc.noise());
    const Trajectory a{tr.states.leftCols(5), tr.inputs.leftCols(4)};
    const Trajectory b{tr.states.rightCols(7), tr.inputs.rightCols(6)};
    const double parts = prediction_error(a, sc.system(i), sc.noise()) + prediction_error(b, sc.system(i), sc.noise());
    EXPECT_NEAR(whole, parts, 1e-12 * whole);
    EXPECT_GE(whole, 0.0);
  }
}

TEST(IsotropicInput, ExpectedBlockEnergy) {
  Rng rng(21);
  const double gamma = 1.7;
  const int tau = 6;
  Welford w;
  for (int k = 0; k < 20000; ++k) w.add(sample_isotropic_input(gamma, 3, tau, rng).squaredNorm());
  EXPECT_NEAR(w.result().mean, gamma * gamma * tau, 3.0 * w.result().se);
  EXPECT_THROW(sample_isotropic_input(0.0, 3, tau, rng), std::invalid_argument);
}

TEST(Stacking, RoundTrip) {
  Rng rng(2);
  const Matrix u = randn(rng, 3, 4);
  const Vector s = stack(u);
  EXPECT_EQ(s.size(), 12);
  EXPECT_EQ(s(3), u(0, 1));
  EXPECT_EQ(unstack(s, 3), u);
  EXPECT_THROW(unstack(s, 5), DimensionError);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(77, 1);
  Rng b(77, 1);
  Rng c(77, 2);
  bool differs = false;
  for (int k = 0; k < 100; ++k) {
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    differs |= x != c.normal();
  }
  EXPECT_TRUE(differs);
  const std::vector<double> w{0.0, 1.0, 0.0};
  EXPECT_EQ(a.categorical(w), 1u);
}
