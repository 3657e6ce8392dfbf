#include <gtest/gtest.h>

#include "support.hpp"

using namespace activeid;
using namespace testing_support;

namespace {

double lmax_mix(const std::vector<Matrix>& ws, const Vector& p) {
  Matrix m = Matrix::Zero(ws[0].rows(), ws[0].cols());
  for (std::size_t i = 0; i < ws.size(); ++i) m += p(static_cast<Eigen::Index>(i)) * ws[i];
  return linalg::lambda_max(m);
}

void check_invariants(const std::vector<Matrix>& ws, const MixtureSolution& s) {
  EXPECT_GE(s.p.minCoeff(), 0.0);
  EXPECT_NEAR(s.p.sum(), 1.0, 1e-10);
  EXPECT_NEAR(s.top_vector.norm(), 1.0, 1e-10);
  Matrix m = Matrix::Zero(ws[0].rows(), ws[0].cols());
  for (std::size_t i = 0; i < ws.size(); ++i) m += s.p(static_cast<Eigen::Index>(i)) * ws[i];
  EXPECT_NEAR(s.top_vector.dot(m * s.top_vector), s.value, 1e-6 * (1.0 + s.value));
  EXPECT_GE(s.certified_gap, 0.0);
}

}  // namespace

TEST(Mixture, SingleMatrix) {
  Rng rng(1);
  const std::vector<Matrix> ws{random_psd(rng, 4, 3)};
  const auto s = minimize_mixture(ws);
  EXPECT_EQ(s.p.size(), 1);
  EXPECT_NEAR(s.value, linalg::lambda_max(ws[0]), 1e-12);
  check_invariants(ws, s);
}

TEST(Mixture, DiagonalPairMidpoint) {
  const std::vector<Matrix> ws{Vector(Eigen::Vector2d(1, 0)).asDiagonal(), Vector(Eigen::Vector2d(0, 1)).asDiagonal()};
  const auto s = minimize_mixture(ws);
  EXPECT_NEAR(s.p(0), 0.5, 1e-8);
  EXPECT_NEAR(s.p(1), 0.5, 1e-8);
  EXPECT_NEAR(s.value, 0.5, 1e-8);
  EXPECT_LE(s.certified_gap, 1e-8);
  check_invariants(ws, s);
}

TEST(Mixture, MatchesSimplexGrid) {
  Rng rng(2);
  for (int trial = 0; trial < 4; ++trial) {
    std::vector<Matrix> ws;
    for (int i = 0; i < 3; ++i) ws.push_back(random_psd(rng, 4, 1 + (trial + i) % 4));
    const auto s = minimize_mixture(ws);
    check_invariants(ws, s);
    const double grid = simplex_grid_min([&](const Vector& p) { return lmax_mix(ws, p); }, 400);
    EXPECT_LE(s.value, grid + s.certified_gap + 1e-9);
    EXPECT_LE(s.lower_bound(), grid + 1e-9);
    EXPECT_NEAR(s.value, lmax_mix(ws, s.p), 1e-9);
  }
}

TEST(Mixture, CertificateIsValidLowerBound) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Matrix> ws;
    const int n = 2 + trial % 4;
    for (int i = 0; i < n; ++i) ws.push_back(random_psd(rng, 5, 2));
    const auto s = minimize_mixture(ws);
    // The dual density gives min_i <W_i, X> <= lambda_max at every p.
    const Matrix X = s.dual_basis * s.dual_weights.asDiagonal() * s.dual_basis.transpose();
    EXPECT_NEAR(X.trace(), 1.0, 1e-10);
    double lower = std::numeric_limits<double>::infinity();
    for (const auto& w : ws) lower = std::min(lower, (w.cwiseProduct(X)).sum());
    EXPECT_NEAR(lower, s.lower_bound(), 1e-8 * (1.0 + s.value));
    for (int k = 0; k < 20; ++k) {
      Vector p(n);
      for (int i = 0; i < n; ++i) p(i) = -std::log(rng.uniform() + 1e-300);
      p /= p.sum();
      EXPECT_GE(lmax_mix(ws, p), s.lower_bound() - 1e-10);
    }
  }
}

TEST(Mixture, RejectsBadInput) {
  Matrix asym = Matrix::Identity(2, 2);
  asym(0, 1) = 1.0;
  EXPECT_THROW(minimize_mixture(std::vector<Matrix>{asym}), std::invalid_argument);
  EXPECT_THROW(minimize_mixture(std::vector<Matrix>{Matrix::Identity(2, 2), Matrix::Identity(3, 3)}),
               DimensionError);
  EXPECT_THROW(minimize_mixture(std::vector<Matrix>{}), std::invalid_argument);
}

TEST(Mixture, DegenerateTopEigenvalueIsCertified) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Matrix> ws;
    for (int i = 0; i < 2 + trial % 4; ++i) ws.push_back(random_psd(rng, 5, 2));
    const auto s = minimize_mixture(ws);
    EXPECT_TRUE(s.converged) << trial;
    EXPECT_LE(s.certified_gap, 1e-6 * s.value) << trial;
  }
}

TEST(Mixture, GameSolverMatchingPennies) {
  Matrix g(2, 2);
  g << 1, -1, -1, 1;
  const auto s = detail::solve_matrix_game(g);
  EXPECT_NEAR(s.value, 0.0, 1e-12);
  EXPECT_NEAR(s.row(0), 0.5, 1e-12);
  EXPECT_NEAR(s.col(0), 0.5, 1e-12);
}

TEST(Mixture, ZeroMatrices) {
  const std::vector<Matrix> ws{Matrix::Zero(3, 3), Matrix::Zero(3, 3)};
  const auto s = minimize_mixture(ws);
  EXPECT_EQ(s.value, 0.0);
  check_invariants(ws, s);
}

TEST(Mixture, ExhaustedIterationsCarryBestIterate) {
  Rng rng(5);
  std::vector<Matrix> ws;
  for (int i = 0; i < 3; ++i) ws.push_back(random_psd(rng, 6, 2));
  MixtureOptions opt;
  opt.max_iter = 2;
  opt.tol = 1e-14;
  opt.polish_rounds = 0;
  try {
    minimize_mixture(ws, opt);
    FAIL() << "expected MixtureConvergenceError";
  } catch (const MixtureConvergenceError& e) {
    EXPECT_NEAR(e.best().p.sum(), 1.0, 1e-10);
    EXPECT_GT(e.best().certified_gap, 0.0);
  }
}
