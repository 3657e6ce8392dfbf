#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "activeid/error.hpp"
#include "activeid/linalg.hpp"
#include "activeid/lti.hpp"
#include "activeid/mixture.hpp"

namespace activeid {

/// Block lower-triangular maps from a tau-step input (resp. whitened noise)
/// block to the stacked states x(1..tau): block (r, c) is A^{r-c} B
/// (resp. A^{r-c} sigma_w^{1/2}) for c <= r.
struct ToeplitzPair {
  Matrix S_u;
  Matrix S_w;
  int tau = 0;
};

inline ToeplitzPair build_toeplitz(const LinearSystem& truth, const NoiseModel& noise, int tau) {
  detail::require(tau >= 1, "block length tau must be >= 1, got " + std::to_string(tau));
  detail::require_dim(noise.dim() == truth.n_x(), "noise dimension does not match n_x");
  const Eigen::Index nx = truth.n_x();
  const Eigen::Index nu = truth.n_u();
  const auto pw = linalg::powers(truth.A(), tau - 1);
  ToeplitzPair tp{Matrix::Zero(nx * tau, nu * tau), Matrix::Zero(nx * tau, nx * tau), tau};
  for (int r = 0; r < tau; ++r) {
    for (int c = 0; c <= r; ++c) {
      const Matrix& ak = pw[static_cast<std::size_t>(r - c)];
      tp.S_u.block(r * nx, c * nu, nx, nu) = ak * truth.B();
      tp.S_w.block(r * nx, c * nx, nx, nx) = ak * noise.chol();
    }
  }
  return tp;
}

/// Quadratic model of the expected block prediction gap between the data
/// generating system and candidate `index`:
///   E[gap] = U^T W U + 2 U^T m + c0 + noise_trace.
struct DistinguishabilityProfile {
  std::size_t index = 0;
  int tau = 0;
  Matrix W;
  Vector m;
  double c0 = 0.0;
  double noise_trace = 0.0;

  /// Deterministic-input value of the quadratic model.
  double objective(const Vector& u) const { return u.dot(W * u) + 2.0 * u.dot(m) + c0 + noise_trace; }
};

namespace detail {

/// Per-step blocks of the difference between truth and candidate, weighted by
/// the noise precision.
struct DifferenceBlocks {
  Matrix dA;
  Matrix dB;
  Matrix Q;  // dA^T S^{-1} dA
  Matrix R;  // dB^T S^{-1} dB
  Matrix N;  // dB^T S^{-1} dA

  DifferenceBlocks(const LinearSystem& truth, const LinearSystem& cand, const NoiseModel& noise)
      : dA(truth.A() - cand.A()), dB(truth.B() - cand.B()) {
    Q = linalg::symmetrized(dA.transpose() * noise.inv() * dA);
    R = linalg::symmetrized(dB.transpose() * noise.inv() * dB);
    N = dB.transpose() * noise.inv() * dA;
  }
};

/// Left-multiplies a stacked (block-rows of height `bs`) matrix by I_tau (x) blk.
inline Matrix block_diag_apply(const Matrix& blk, const Matrix& stacked, int tau) {
  const Eigen::Index bs = blk.cols();
  Matrix out(blk.rows() * tau, stacked.cols());
  for (int r = 0; r < tau; ++r) out.middleRows(r * blk.rows(), blk.rows()) = blk * stacked.middleRows(r * bs, bs);
  return out;
}

inline Matrix kron_identity(const Matrix& blk, int tau) {
  Matrix out = Matrix::Zero(blk.rows() * tau, blk.cols() * tau);
  for (int r = 0; r < tau; ++r) out.block(r * blk.rows(), r * blk.cols(), blk.rows(), blk.cols()) = blk;
  return out;
}

/// Stacked free response [A x0; A^2 x0; ...; A^tau x0].
inline Vector free_response(const Matrix& a, const Vector& x0, int tau) {
  Vector d(x0.size() * tau);
  Vector x = x0;
  for (int t = 0; t < tau; ++t) {
    x = a * x;
    d.segment(t * x0.size(), x0.size()) = x;
  }
  return d;
}

/// Linear and constant terms contributed by the free response of x0.
inline void set_initial_state_terms(DistinguishabilityProfile& prof, const Matrix& a, const DifferenceBlocks& d,
                                    const ToeplitzPair& tp, const Vector& x0) {
  const Vector dx = free_response(a, x0, tp.tau);
  const Vector q_d = block_diag_apply(d.Q, dx, tp.tau);
  prof.m = tp.S_u.transpose() * q_d + block_diag_apply(d.N, dx, tp.tau);
  prof.c0 = std::max(0.0, dx.dot(q_d));
}

}  // namespace detail

/// Profile of `candidate` against `truth` given a prebuilt Toeplitz pair of
/// the truth. Assembly follows W = R + S_u^T Q S_u + N S_u + (N S_u)^T with
/// Q, R, N the block diagonals of the weighted differences.
inline DistinguishabilityProfile profile_against(const LinearSystem& truth, const LinearSystem& candidate,
                                                 const NoiseModel& noise, const ToeplitzPair& tp, const Vector& x0,
                                                 std::size_t index) {
  detail::require_dim(x0.size() == truth.n_x(), "x0 dimension " + std::to_string(x0.size()) +
                                                    " does not match n_x=" + std::to_string(truth.n_x()));
  const int tau = tp.tau;
  const detail::DifferenceBlocks d(truth, candidate, noise);

  const Matrix q_su = detail::block_diag_apply(d.Q, tp.S_u, tau);
  const Matrix n_su = detail::block_diag_apply(d.N, tp.S_u, tau);
  Matrix w = detail::kron_identity(d.R, tau);
  w.noalias() += tp.S_u.transpose() * q_su;
  w += n_su + n_su.transpose();

  DistinguishabilityProfile prof;
  prof.index = index;
  prof.tau = tau;
  prof.W = linalg::symmetrized(w);
  prof.noise_trace = std::max(0.0, (detail::block_diag_apply(d.Q, tp.S_w, tau).cwiseProduct(tp.S_w)).sum());

  detail::set_initial_state_terms(prof, truth.A(), d, tp, x0);
  return prof;
}

/// Profile of candidate `i` against the scenario's true system.
inline DistinguishabilityProfile build_profile(const Scenario& scenario, std::size_t i, int tau, const Vector& x0) {
  detail::require(i < scenario.size(), "candidate index " + std::to_string(i) + " out of range");
  const ToeplitzPair tp = build_toeplitz(scenario.truth(), scenario.noise(), tau);
  return profile_against(scenario.truth(), scenario.system(i), scenario.noise(), tp, x0, i);
}

inline DistinguishabilityProfile build_profile(const Scenario& scenario, std::size_t i, int tau) {
  return build_profile(scenario, i, tau, Vector::Zero(scenario.n_x()));
}

/// Profiles of every candidate other than `reference` against it.
inline std::vector<DistinguishabilityProfile> profiles_against(const Scenario& scenario, std::size_t reference,
                                                               int tau, const Vector& x0) {
  detail::require(reference < scenario.size(), "reference index out of range");
  const LinearSystem& ref = scenario.system(reference);
  const ToeplitzPair tp = build_toeplitz(ref, scenario.noise(), tau);
  std::vector<DistinguishabilityProfile> out;
  out.reserve(scenario.alternatives());
  for (std::size_t i = 0; i < scenario.size(); ++i)
    if (i != reference) out.push_back(profile_against(ref, scenario.system(i), scenario.noise(), tp, x0, i));
  return out;
}

inline std::vector<DistinguishabilityProfile> alternative_profiles(const Scenario& scenario, int tau) {
  return profiles_against(scenario, scenario.true_index(), tau, Vector::Zero(scenario.n_x()));
}

/// Closed-form expected block prediction gap under the input
/// (1 - rho) U + rho u_p with u_p ~ N(0, sigma_u2 I).
inline double expected_error(const DistinguishabilityProfile& prof, const Vector& u, double rho, double sigma_u2) {
  detail::require_dim(u.size() == prof.W.rows(), "stacked input has length " + std::to_string(u.size()) +
                                                     ", expected " + std::to_string(prof.W.rows()));
  detail::require(rho >= 0.0 && rho <= 1.0, "rho must lie in [0, 1]");
  detail::require(sigma_u2 >= 0.0, "sigma_u2 must be nonnegative");
  const double a = 1.0 - rho;
  return a * a * u.dot(prof.W * u) + 2.0 * a * u.dot(prof.m) + prof.c0 + sigma_u2 * rho * rho * prof.W.trace() +
         prof.noise_trace;
}

enum class PeKind { random, optimal, algorithm };

inline const char* to_string(PeKind k) {
  switch (k) {
    case PeKind::random:
      return "random";
    case PeKind::optimal:
      return "optimal";
    case PeKind::algorithm:
      return "algorithm";
  }
  return "?";
}

/// Persistent-excitation coefficients: per-step expected gap is at least
/// c_u * gamma_u^2 + c_w for every alternative.
struct PECoefficients {
  double c_u = 0.0;
  double c_w = 0.0;
  int tau = 0;
  PeKind kind = PeKind::random;
};

namespace detail {

inline double noise_floor(const std::vector<DistinguishabilityProfile>& profs, int tau) {
  double c_w = std::numeric_limits<double>::infinity();
  for (const auto& p : profs) c_w = std::min(c_w, p.noise_trace / tau);
  return c_w;
}

}  // namespace detail

/// Isotropic Gaussian excitation. lambda_mean is linear in the mixture
/// weights, so its simplex minimum sits at a vertex.
inline PECoefficients pe_random(const Scenario& scenario, int tau) {
  const auto profs = alternative_profiles(scenario, tau);
  double c_u = std::numeric_limits<double>::infinity();
  for (const auto& p : profs) c_u = std::min(c_u, linalg::lambda_mean(p.W));
  return {c_u, detail::noise_floor(profs, tau), tau, PeKind::random};
}

inline PECoefficients pe_optimal(const Scenario& scenario, int tau, const MixtureOptions& opt = {}) {
  const auto profs = alternative_profiles(scenario, tau);
  std::vector<Matrix> ws;
  for (const auto& p : profs) ws.push_back(p.W);
  const MixtureSolution sol = minimize_mixture(ws, opt);
  return {sol.value, detail::noise_floor(profs, tau), tau, PeKind::optimal};
}

/// Coefficients of the mixed certainty-equivalence input when the drawn
/// estimate is wrong with probability at most p_err.
inline PECoefficients pe_algorithm(const Scenario& scenario, int tau, double p_err, double rho,
                                   const MixtureOptions& opt = {}) {
  detail::require(p_err >= 0.0 && p_err <= 1.0, "p_err must lie in [0, 1]");
  detail::require(rho >= 0.0 && rho <= 1.0, "rho must lie in [0, 1]");
  const PECoefficients opt_c = pe_optimal(scenario, tau, opt);
  const PECoefficients rnd_c = pe_random(scenario, tau);
  return {(1.0 - p_err) * (1.0 - rho) * opt_c.c_u + rho * rnd_c.c_u, rnd_c.c_w, tau, PeKind::algorithm};
}

/// Covariance of dA_i x(tau) + dB_i u(tau) when x(0) = 0 and the input is
/// i.i.d. N(0, sigma_u2 I).
inline Matrix sigma_delta(const Scenario& scenario, std::size_t i, int tau, double sigma_u2) {
  detail::require(i < scenario.size(), "candidate index out of range");
  detail::require(tau >= 1, "tau must be >= 1");
  detail::require(sigma_u2 >= 0.0, "sigma_u2 must be nonnegative");
  const LinearSystem& truth = scenario.truth();
  const Matrix dA = truth.A() - scenario.system(i).A();
  const Matrix dB = truth.B() - scenario.system(i).B();
  const Matrix drive = sigma_u2 * truth.B() * truth.B().transpose() + scenario.noise().sigma_w();
  Matrix state_cov = Matrix::Zero(truth.n_x(), truth.n_x());
  Matrix ak = Matrix::Identity(truth.n_x(), truth.n_x());
  for (int k = 0; k < tau; ++k) {
    state_cov += ak * drive * ak.transpose();
    ak = truth.A() * ak;
  }
  return linalg::symmetrized(dA * state_cov * dA.transpose() + sigma_u2 * dB * dB.transpose());
}

/// Largest exponential-weights temperature for which the supermartingale
/// argument behind the stopping-time bound holds, given the residual
/// covariances of each alternative.
inline double eta_bound_from(const std::vector<Matrix>& sigma_deltas, const NoiseModel& noise, int tau) {
  detail::require(tau >= 1, "tau must be >= 1");
  double worst = 0.0;
  for (std::size_t i = 0; i < sigma_deltas.size(); ++i) {
    const Matrix& s = sigma_deltas[i];
    if (s.cwiseAbs().maxCoeff() == 0.0)
      throw std::invalid_argument("residual covariance of alternative " + std::to_string(i) + " is zero");
    // Same spectrum as (S^{1/2})^T sigma_w^{-1} S^{1/2}.
    const Matrix lw = noise.whiten(s);
    const Matrix sym = noise.whiten(Matrix(lw.transpose()));
    worst = std::max(worst, linalg::lambda_max(linalg::symmetrized(sym)));
  }
  return 1.0 / (512.0 * tau * worst);
}

inline double eta_bound(const Scenario& scenario, int tau, double sigma_u2) {
  std::vector<Matrix> sds;
  for (std::size_t i = 0; i < scenario.size(); ++i)
    if (i != scenario.true_index()) sds.push_back(sigma_delta(scenario, i, tau, sigma_u2));
  return eta_bound_from(sds, scenario.noise(), tau);
}

// ---------------------------------------------------------------------------
// Matrix-free forms, used when tau is too long for dense assembly.

/// Applies W(T) of `candidate` against `truth` without forming it: W = F^T
/// M F where F maps U to the stacked gaps dA x(t+1) + dB u(t).
class GapOperator {
 public:
  GapOperator(const LinearSystem& truth, const LinearSystem& candidate, const NoiseModel& noise, int horizon)
      : a_(truth.A()), b_(truth.B()), diff_(truth, candidate, noise), noise_(noise), horizon_(horizon) {
    detail::require(horizon >= 1, "horizon must be >= 1");
  }

  Eigen::Index dim() const { return b_.cols() * horizon_; }

  Vector apply(const Vector& u) const {
    const Eigen::Index nx = a_.rows();
    const Eigen::Index nu = b_.cols();
    Matrix y(nx, horizon_);
    Vector x = Vector::Zero(nx);
    for (int t = 0; t < horizon_; ++t) {
      const auto ut = u.segment(t * nu, nu);
      x = a_ * x + b_ * ut;
      y.col(t) = noise_.inv() * (diff_.dA * x + diff_.dB * ut);
    }
    Vector out(dim());
    Vector lam = Vector::Zero(nx);
    for (int t = horizon_ - 1; t >= 0; --t) {
      lam = diff_.dA.transpose() * y.col(t) + a_.transpose() * lam;
      out.segment(t * nu, nu) = diff_.dB.transpose() * y.col(t) + b_.transpose() * lam;
    }
    return out;
  }

  /// U^T W U by forward simulation of the noise-free gap.
  double quadratic(const Vector& u) const {
    const Eigen::Index nu = b_.cols();
    Vector x = Vector::Zero(a_.rows());
    double acc = 0.0;
    for (int t = 0; t < horizon_; ++t) {
      const auto ut = u.segment(t * nu, nu);
      x = a_ * x + b_ * ut;
      acc += noise_.weighted_norm2(diff_.dA * x + diff_.dB * ut);
    }
    return acc;
  }

  /// tr W(T) in O(T) block operations.
  double trace() const {
    double acc = horizon_ * (diff_.R.trace() + 2.0 * (diff_.N * b_).trace());
    Matrix akb = b_;
    for (int k = 0; k < horizon_; ++k) {
      acc += (horizon_ - k) * (akb.transpose() * diff_.Q * akb).trace();
      akb = a_ * akb;
    }
    return acc;
  }

  /// tr(S_w^T Q S_w) in O(T) block operations.
  double noise_trace() const {
    double acc = 0.0;
    Matrix akl = noise_.chol();
    for (int k = 0; k < horizon_; ++k) {
      acc += (horizon_ - k) * (akl.transpose() * diff_.Q * akl).trace();
      akl = a_ * akl;
    }
    return std::max(0.0, acc);
  }

 private:
  Matrix a_;
  Matrix b_;
  detail::DifferenceBlocks diff_;
  NoiseModel noise_;
  int horizon_;
};

}  // namespace activeid
