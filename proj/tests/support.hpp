#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "activeid/activeid.hpp"

namespace testing_support {

using activeid::LinearSystem;
using activeid::Matrix;
using activeid::NoiseModel;
using activeid::Rng;
using activeid::Scenario;
using activeid::Vector;

inline Matrix randn(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

inline Vector randn(Rng& rng, Eigen::Index n) { return randn(rng, n, 1); }

/// Spectral norm scaled to `radius`, so the system is stable.
inline Matrix random_stable(Rng& rng, Eigen::Index n, double radius = 0.8) {
  Matrix a = randn(rng, n, n);
  const double s = Eigen::JacobiSVD<Matrix>(a).singularValues()(0);
  return a * (radius * (0.3 + 0.7 * rng.uniform()) / s);
}

inline Matrix random_spd(Rng& rng, Eigen::Index n) {
  const Matrix g = randn(rng, n, n);
  return g * g.transpose() / static_cast<double>(n) + 0.2 * Matrix::Identity(n, n);
}

inline Matrix random_psd(Rng& rng, Eigen::Index n, Eigen::Index rank) {
  const Matrix g = randn(rng, n, rank);
  return g * g.transpose();
}

/// Truth at index 0 plus `alternatives` perturbed candidates.
inline Scenario random_scenario(Rng& rng, Eigen::Index nx, Eigen::Index nu, int alternatives, bool spd_noise = true,
                                double gamma = 1.0) {
  std::vector<LinearSystem> sys;
  const Matrix a = random_stable(rng, nx);
  const Matrix b = randn(rng, nx, nu);
  sys.emplace_back(a, b);
  for (int k = 0; k < alternatives; ++k) {
    Matrix ak = a + 0.3 * randn(rng, nx, nx);
    const double s = Eigen::JacobiSVD<Matrix>(ak).singularValues()(0);
    if (s > 0.95) ak *= 0.95 / s;
    sys.emplace_back(ak, b + 0.3 * randn(rng, nx, nu));
  }
  const Matrix sw = spd_noise ? random_spd(rng, nx) : Matrix(Matrix::Identity(nx, nx));
  return Scenario(std::move(sys), NoiseModel(sw), gamma);
}

/// Sample mean and standard error.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

class Welford {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  MeanSe result() const {
    const double var = n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
    return {mean_, std::sqrt(var / static_cast<double>(n_))};
  }
  double mean() const { return mean_; }
  double population_std() const { return n_ > 0 ? std::sqrt(m2_ / static_cast<double>(n_)) : 0.0; }
  std::size_t count() const { return static_cast<std::size_t>(n_); }

 private:
  long n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Independent evaluation of the block gap sum_t |dA x(t+1) + dB u(t)|^2
/// weighted by the noise precision, by direct simulation. `z` holds the
/// standard-normal noise draws column by column.
inline double simulated_gap(const LinearSystem& truth, const LinearSystem& cand, const NoiseModel& noise,
                            const Matrix& inputs, const Vector& x0, const Matrix& z) {
  const Matrix dA = truth.A() - cand.A();
  const Matrix dB = truth.B() - cand.B();
  Vector x = x0;
  double acc = 0.0;
  for (Eigen::Index t = 0; t < inputs.cols(); ++t) {
    x = truth.A() * x + truth.B() * inputs.col(t) + noise.chol() * z.col(t);
    const Vector r = dA * x + dB * inputs.col(t);
    acc += r.dot(noise.inv() * r);
  }
  return acc;
}

/// max over a grid of the simplex with the given step of f(p), for N = 3.
template <class F>
double simplex_grid_min(F&& f, int steps) {
  double best = std::numeric_limits<double>::infinity();
  Vector p(3);
  for (int i = 0; i <= steps; ++i)
    for (int j = 0; i + j <= steps; ++j) {
      p << static_cast<double>(i) / steps, static_cast<double>(j) / steps,
          static_cast<double>(steps - i - j) / steps;
      best = std::min(best, f(p));
    }
  return best;
}

/// Best min_i U^T W_i U + const_i over random directions scaled to the budget.
inline double sphere_oracle(const std::vector<activeid::DistinguishabilityProfile>& profs, double budget, long draws,
                            Rng& rng) {
  const Eigen::Index n = profs.front().W.rows();
  double best = -std::numeric_limits<double>::infinity();
  Vector u(n);
  for (long k = 0; k < draws; ++k) {
    for (Eigen::Index j = 0; j < n; ++j) u(j) = rng.normal();
    u *= std::sqrt(budget) / u.norm();
    double v = std::numeric_limits<double>::infinity();
    for (const auto& p : profs) v = std::min(v, p.objective(u));
    best = std::max(best, v);
  }
  return best;
}

}  // namespace testing_support
