#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "activeid/error.hpp"
#include "activeid/linalg.hpp"
#include "activeid/random.hpp"

namespace activeid {

/// Candidate pair (A, B) of x(t+1) = A x(t) + B u(t) + w(t).
class LinearSystem {
 public:
  LinearSystem(Matrix a, Matrix b) : a_(std::move(a)), b_(std::move(b)) {
    detail::require_dim(a_.rows() == a_.cols(), "A must be square, got " + std::to_string(a_.rows()) + "x" +
                                                    std::to_string(a_.cols()));
    detail::require_dim(b_.rows() == a_.rows(), "B row count (n_x) " + std::to_string(b_.rows()) +
                                                    " does not match A (" + std::to_string(a_.rows()) + ")");
    detail::require(a_.allFinite() && b_.allFinite(), "system matrices must be finite");
  }

  const Matrix& A() const { return a_; }
  const Matrix& B() const { return b_; }
  Eigen::Index n_x() const { return a_.rows(); }
  Eigen::Index n_u() const { return b_.cols(); }

 private:
  Matrix a_;
  Matrix b_;
};

/// Gaussian process noise N(0, sigma_w) with its lower Cholesky factor and
/// precision matrix.
class NoiseModel {
 public:
  explicit NoiseModel(Matrix sigma_w) : cov_(std::move(sigma_w)) {
    detail::require_dim(cov_.rows() == cov_.cols(), "sigma_w must be square");
    detail::require(cov_.allFinite(), "sigma_w must be finite");
    detail::require(linalg::is_symmetric(cov_, 1e-12), "sigma_w must be symmetric");
    cov_ = linalg::symmetrized(cov_);
    detail::require(linalg::eig(cov_).eigenvalues()(0) > 0.0, "sigma_w must be positive definite");
    Eigen::LLT<Matrix> llt(cov_);
    detail::require(llt.info() == Eigen::Success, "sigma_w Cholesky factorisation failed");
    chol_ = llt.matrixL();
    inv_ = llt.solve(Matrix::Identity(cov_.rows(), cov_.cols()));
    inv_ = linalg::symmetrized(inv_);
  }

  static NoiseModel isotropic(Eigen::Index n, double variance) {
    return NoiseModel(variance * Matrix::Identity(n, n));
  }

  const Matrix& sigma_w() const { return cov_; }
  const Matrix& chol() const { return chol_; }
  const Matrix& inv() const { return inv_; }
  Eigen::Index dim() const { return cov_.rows(); }

  /// L^{-1} r, so that |whiten(r)|^2 = r^T sigma_w^{-1} r.
  Vector whiten(const Vector& r) const { return chol_.triangularView<Eigen::Lower>().solve(r); }
  Matrix whiten(const Matrix& r) const { return chol_.triangularView<Eigen::Lower>().solve(r); }

  double weighted_norm2(const Vector& r) const { return whiten(r).squaredNorm(); }

 private:
  Matrix cov_;
  Matrix chol_;
  Matrix inv_;
};

/// Identification problem instance: a finite hypothesis class with the
/// index of the system that actually generates data.
class Scenario {
 public:
  Scenario(std::vector<LinearSystem> systems, NoiseModel noise, double gamma_u, std::size_t true_index = 0)
      : systems_(std::move(systems)), noise_(std::move(noise)), gamma_u_(gamma_u), true_index_(true_index) {
    detail::require(systems_.size() >= 2, "a scenario needs at least two candidate systems");
    const auto nx = systems_.front().n_x();
    const auto nu = systems_.front().n_u();
    for (std::size_t i = 0; i < systems_.size(); ++i) {
      detail::require_dim(systems_[i].n_x() == nx, "candidate " + std::to_string(i) + " has n_x=" +
                                                       std::to_string(systems_[i].n_x()) + ", expected " +
                                                       std::to_string(nx));
      detail::require_dim(systems_[i].n_u() == nu, "candidate " + std::to_string(i) + " has n_u=" +
                                                       std::to_string(systems_[i].n_u()) + ", expected " +
                                                       std::to_string(nu));
    }
    detail::require_dim(noise_.dim() == nx, "sigma_w dimension does not match n_x");
    detail::require(gamma_u_ > 0.0 && std::isfinite(gamma_u_), "gamma_u must be positive");
    detail::require(true_index_ < systems_.size(), "true_index out of range");
    for (std::size_t i = 0; i < systems_.size(); ++i)
      for (std::size_t j = i + 1; j < systems_.size(); ++j) {
        const double d = (systems_[i].A() - systems_[j].A()).norm() + (systems_[i].B() - systems_[j].B()).norm();
        detail::require(d > 0.0, "candidates " + std::to_string(i) + " and " + std::to_string(j) + " coincide");
      }
  }

  const std::vector<LinearSystem>& systems() const { return systems_; }
  const LinearSystem& system(std::size_t i) const { return systems_.at(i); }
  const LinearSystem& truth() const { return systems_[true_index_]; }
  const NoiseModel& noise() const { return noise_; }
  double gamma_u() const { return gamma_u_; }
  std::size_t true_index() const { return true_index_; }
  std::size_t size() const { return systems_.size(); }
  /// Number of alternatives N (class size minus one).
  std::size_t alternatives() const { return systems_.size() - 1; }
  Eigen::Index n_x() const { return systems_.front().n_x(); }
  Eigen::Index n_u() const { return systems_.front().n_u(); }

  Scenario with_true_index(std::size_t i) const { return Scenario(systems_, noise_, gamma_u_, i); }

 private:
  std::vector<LinearSystem> systems_;
  NoiseModel noise_;
  double gamma_u_;
  std::size_t true_index_;
};

/// States x(0..T) as columns of an n_x x (T+1) matrix, inputs u(0..T-1) as
/// columns of an n_u x T matrix.
struct Trajectory {
  Matrix states;
  Matrix inputs;

  Eigen::Index length() const { return inputs.cols(); }
};

/// Rolls the true dynamics forward under `inputs` starting from `x0`.
template <NormalSource G>
Trajectory simulate(const LinearSystem& system, const NoiseModel& noise, const Matrix& inputs, const Vector& x0,
                    G& rng) {
  detail::require(inputs.cols() >= 1, "input sequence must be non-empty");
  detail::require_dim(inputs.rows() == system.n_u(), "input dimension " + std::to_string(inputs.rows()) +
                                                         " does not match n_u=" + std::to_string(system.n_u()));
  detail::require_dim(x0.size() == system.n_x(),
                      "x0 dimension " + std::to_string(x0.size()) + " does not match n_x=" + std::to_string(system.n_x()));
  detail::require_dim(noise.dim() == system.n_x(), "noise dimension does not match n_x");

  const Eigen::Index nx = system.n_x();
  const Eigen::Index T = inputs.cols();
  Trajectory traj{Matrix(nx, T + 1), inputs};
  traj.states.col(0) = x0;
  Vector z(nx);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index j = 0; j < nx; ++j) z(j) = rng.normal();
    traj.states.col(t + 1) =
        system.A() * traj.states.col(t) + system.B() * inputs.col(t) + noise.chol().triangularView<Eigen::Lower>() * z;
  }
  return traj;
}

/// i.i.d. u(t) ~ N(0, gamma_u^2 / n_u I), returned as an n_u x length matrix.
template <NormalSource G>
Matrix sample_isotropic_input(double gamma_u, Eigen::Index n_u, Eigen::Index length, G& rng) {
  detail::require(gamma_u > 0.0, "gamma_u must be positive");
  detail::require(n_u >= 1, "n_u must be positive");
  detail::require(length >= 1, "input length must be positive");
  const double scale = gamma_u / std::sqrt(static_cast<double>(n_u));
  Matrix u(n_u, length);
  for (Eigen::Index t = 0; t < length; ++t)
    for (Eigen::Index j = 0; j < n_u; ++j) u(j, t) = scale * rng.normal();
  return u;
}

/// Sum of sigma_w^{-1}-weighted one-step prediction errors of `candidate`
/// along the trajectory.
inline double prediction_error(const Trajectory& traj, const LinearSystem& candidate, const NoiseModel& noise) {
  detail::require_dim(traj.states.rows() == candidate.n_x(), "trajectory state dimension does not match candidate");
  detail::require_dim(traj.inputs.rows() == candidate.n_u(), "trajectory input dimension does not match candidate");
  detail::require_dim(traj.states.cols() == traj.inputs.cols() + 1, "trajectory needs one more state than inputs");
  detail::require_dim(noise.dim() == candidate.n_x(), "noise dimension does not match candidate");
  const Eigen::Index T = traj.inputs.cols();
  const Matrix residuals = traj.states.rightCols(T) - candidate.A() * traj.states.leftCols(T) - candidate.B() * traj.inputs;
  return noise.whiten(residuals).squaredNorm();
}

/// Stacks the columns of an n_u x tau input block into U = [u(0); ...; u(tau-1)].
inline Vector stack(const Matrix& inputs) { return Eigen::Map<const Vector>(inputs.data(), inputs.size()); }

inline Matrix unstack(const Vector& u, Eigen::Index n_u) {
  detail::require_dim(n_u > 0 && u.size() % n_u == 0, "stacked input length is not a multiple of n_u");
  return Eigen::Map<const Matrix>(u.data(), n_u, u.size() / n_u);
}

}  // namespace activeid
