#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "activeid/error.hpp"
#include "activeid/geometry.hpp"
#include "activeid/linalg.hpp"
#include "activeid/lti.hpp"
#include "activeid/mixture.hpp"
#include "activeid/random.hpp"

namespace activeid {

enum class PlanMethod { mixture_eigvec, refined };

inline const char* to_string(PlanMethod m) { return m == PlanMethod::mixture_eigvec ? "mixture_eigvec" : "refined"; }

struct DesignOptions {
  MixtureOptions mixture{};
  int refine_iterations = 200;
  /// Initial softmin sharpness is beta_numerator / (1 + median_i lambda_max(W_i)).
  double beta_numerator = 50.0;
  /// Random sign combinations of the dual eigenbasis tried as extra starts.
  int sign_starts = 4;
};

/// Energy-constrained input block maximising the smallest expected
/// prediction gap over the alternatives of `reference`.
struct ExcitationPlan {
  Vector U;
  int tau = 0;
  double energy = 0.0;
  /// min_i of the design objective at U.
  double achieved_minimum = 0.0;
  PlanMethod method = PlanMethod::mixture_eigvec;
  std::size_t reference = 0;
  /// Mixture weights over the alternatives (in class order, reference skipped).
  Vector p;
  /// min_p lambda_max(sum p_i W_i) as found by the mixture solver.
  double mixture_value = 0.0;
  double mixture_gap = 0.0;
  /// Upper bound on the max-min value from weak duality at p.
  double upper_bound = 0.0;
};

namespace detail {

inline double min_objective(const std::vector<DistinguishabilityProfile>& profs, const Vector& u) {
  double v = std::numeric_limits<double>::infinity();
  for (const auto& p : profs) v = std::min(v, p.objective(u));
  return v;
}

inline Vector project_ball(Vector u, double budget) {
  const double n2 = u.squaredNorm();
  if (n2 > budget && n2 > 0.0) u *= std::sqrt(budget / n2);
  return u;
}

/// Softmin of the design objectives and its gradient.
inline double softmin(const std::vector<DistinguishabilityProfile>& profs, const Vector& u, double beta,
                      Vector* grad) {
  const std::size_t n = profs.size();
  std::vector<double> obj(n);
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    obj[i] = profs[i].objective(u);
    lo = std::min(lo, obj[i]);
  }
  double z = 0.0;
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::exp(-beta * (obj[i] - lo));
    z += w[i];
  }
  if (grad) {
    grad->setZero(u.size());
    for (std::size_t i = 0; i < n; ++i) *grad += (w[i] / z) * 2.0 * (profs[i].W * u + profs[i].m);
  }
  return lo - std::log(z) / beta;
}

/// Projected gradient ascent on the softmin-smoothed max-min objective,
/// sharpening the softmin as it goes. Returns the iterate with the best
/// unsmoothed minimum.
inline Vector refine(const std::vector<DistinguishabilityProfile>& profs, const Vector& start, double budget,
                     double beta0, double curvature, int iterations) {
  Vector u = project_ball(start, budget);
  Vector best = u;
  double best_val = min_objective(profs, u);
  double scale = 1.0 + budget * curvature;
  for (const auto& p : profs) scale = std::max(scale, 1.0 + std::abs(p.c0 + p.noise_trace));
  const double beta_max = 1e10 / scale;
  double beta = beta0;
  const double t_max = 1e3 / (2.0 * curvature + 1e-300);
  double t = 1.0 / (2.0 * curvature + 1e-300);
  Vector grad;
  for (int it = 0; it < iterations; ++it) {
    const double s = softmin(profs, u, beta, &grad);
    bool accepted = false;
    Vector cand;
    for (int h = 0; h < 40; ++h) {
      cand = project_ball(u + t * grad, budget);
      if (softmin(profs, cand, beta, nullptr) > s + 1e-15 * std::abs(s)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (beta >= beta_max) break;
      beta = std::min(beta * 4.0, beta_max);
      t = 1.0 / (2.0 * curvature + 1e-300);
      continue;
    }
    u = cand;
    t = std::min(2.0 * t, t_max);
    const double v = min_objective(profs, u);
    if (v > best_val) {
      best_val = v;
      best = u;
    }
    if ((it + 1) % 25 == 0) beta = std::min(beta * 2.0, beta_max);
  }
  return best;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Solves max_{|U|^2 <= budget} min_i objective_i(U) for the given profiles,
/// seeded by a precomputed mixture solution over their W matrices:
///  (a) U0 = sqrt(budget) * top eigenvector of the optimal mixture;
///  (b) softmin projected-gradient refinement from U0 and from a few other
///      deterministic starts built from the mixture's dual eigenbasis;
///  (c) the best of U0 and the refined points by the true minimum.
inline ExcitationPlan design_from_profiles(const std::vector<DistinguishabilityProfile>& profs,
                                           const MixtureSolution& mix, double budget, std::size_t reference,
                                           const DesignOptions& opt = {}) {
  detail::require(!profs.empty(), "design needs at least one alternative");
  detail::require(budget > 0.0, "energy budget must be positive");
  const Eigen::Index dim = profs.front().W.rows();
  const int tau = profs.front().tau;

  std::vector<double> lmax;
  for (const auto& p : profs) lmax.push_back(std::max(0.0, linalg::lambda_max(p.W)));
  const double curvature = std::max(*std::max_element(lmax.begin(), lmax.end()), 1e-12);
  const double beta0 = opt.beta_numerator / (1.0 + detail::median(lmax));

  Vector m_mix = Vector::Zero(dim);
  double const_mix = 0.0;
  for (std::size_t i = 0; i < profs.size(); ++i) {
    const double pi = mix.p(static_cast<Eigen::Index>(i));
    m_mix += pi * profs[i].m;
    const_mix += pi * (profs[i].c0 + profs[i].noise_trace);
  }

  const double radius = std::sqrt(budget);
  Vector u0 = radius * mix.top_vector;
  if (u0.dot(m_mix) < 0.0) u0 = -u0;

  std::vector<Vector> starts{u0};
  if (mix.dual_basis.cols() > 1) {
    const Vector sw = mix.dual_weights.cwiseSqrt();
    Vector comb = mix.dual_basis * sw;
    if (comb.norm() > 0.0) starts.push_back(radius * comb.normalized());
    Rng signs(0x5eed);
    for (int k = 0; k < opt.sign_starts; ++k) {
      Vector s = sw;
      for (Eigen::Index j = 0; j < s.size(); ++j) s(j) *= signs.uniform() < 0.5 ? -1.0 : 1.0;
      Vector c = mix.dual_basis * s;
      if (c.norm() > 0.0) starts.push_back(radius * c.normalized());
    }
  }
  for (const auto& p : profs) starts.push_back(radius * linalg::top_vector(linalg::eig(p.W)));
  const bool affine = m_mix.norm() > 0.0 || std::any_of(profs.begin(), profs.end(), [](const auto& p) {
                        return p.m.norm() > 0.0;
                      });
  if (affine) {
    const std::size_t n = starts.size();
    for (std::size_t k = 0; k < n; ++k) starts.push_back(-starts[k]);
  }

  ExcitationPlan plan;
  plan.tau = tau;
  plan.reference = reference;
  plan.p = mix.p;
  plan.mixture_value = mix.value;
  plan.mixture_gap = mix.certified_gap;
  plan.U = u0;
  plan.achieved_minimum = detail::min_objective(profs, u0);
  plan.method = PlanMethod::mixture_eigvec;
  for (const auto& s : starts) {
    const Vector r = detail::refine(profs, s, budget, beta0, curvature, opt.refine_iterations);
    const double v = detail::min_objective(profs, r);
    if (v > plan.achieved_minimum) {
      plan.achieved_minimum = v;
      plan.U = r;
      plan.method = PlanMethod::refined;
    }
  }
  plan.energy = plan.U.squaredNorm();
  plan.upper_bound = budget * mix.value + 2.0 * radius * m_mix.norm() + const_mix;

  double scale = 1.0 + plan.upper_bound;
  if (plan.achieved_minimum > plan.upper_bound + 1e-8 * scale)
    throw SolverError("design violates the weak-duality bound: " + std::to_string(plan.achieved_minimum) + " > " +
                      std::to_string(plan.upper_bound));
  return plan;
}

/// Caches, per reference system, everything in the design problem that does
/// not depend on the initial state: Toeplitz maps, W_i, noise traces and the
/// mixture solution. `design` only rebuilds the x0-dependent terms.
class ExcitationDesigner {
 public:
  ExcitationDesigner(Scenario scenario, int tau, DesignOptions opt = {})
      : scenario_(std::move(scenario)), tau_(tau), opt_(opt), refs_(scenario_.size()) {
    detail::require(tau >= 1, "block length tau must be >= 1, got " + std::to_string(tau));
  }

  const Scenario& scenario() const { return scenario_; }
  int tau() const { return tau_; }

  /// Plan treating systems[reference] as the truth, from state x0.
  ExcitationPlan design(std::size_t reference, const Vector& x0) const {
    detail::require(reference < scenario_.size(), "estimate index " + std::to_string(reference) + " out of range");
    detail::require_dim(x0.size() == scenario_.n_x(), "x0 dimension " + std::to_string(x0.size()) +
                                                          " does not match n_x=" + std::to_string(scenario_.n_x()));
    const Reference& ref = prepared(reference);
    std::vector<DistinguishabilityProfile> profs = ref.profiles;
    for (std::size_t k = 0; k < profs.size(); ++k)
      detail::set_initial_state_terms(profs[k], scenario_.system(reference).A(), ref.diffs[k], ref.toeplitz, x0);
    const double budget = scenario_.gamma_u() * scenario_.gamma_u() * tau_;
    return design_from_profiles(profs, ref.mixture, budget, reference, opt_);
  }

  const MixtureSolution& mixture(std::size_t reference) const { return prepared(reference).mixture; }

 private:
  struct Reference {
    ToeplitzPair toeplitz;
    std::vector<DistinguishabilityProfile> profiles;
    std::vector<detail::DifferenceBlocks> diffs;
    MixtureSolution mixture;
  };

  const Reference& prepared(std::size_t reference) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto& slot = refs_[reference];
    if (!slot) {
      auto r = std::make_unique<Reference>();
      const LinearSystem& truth = scenario_.system(reference);
      r->toeplitz = build_toeplitz(truth, scenario_.noise(), tau_);
      const Vector zero = Vector::Zero(scenario_.n_x());
      std::vector<Matrix> ws;
      for (std::size_t i = 0; i < scenario_.size(); ++i) {
        if (i == reference) continue;
        r->profiles.push_back(profile_against(truth, scenario_.system(i), scenario_.noise(), r->toeplitz, zero, i));
        r->diffs.emplace_back(truth, scenario_.system(i), scenario_.noise());
        ws.push_back(r->profiles.back().W);
      }
      r->mixture = minimize_mixture(ws, opt_.mixture);
      slot = std::move(r);
    }
    return *slot;
  }

  Scenario scenario_;
  int tau_;
  DesignOptions opt_;
  mutable std::mutex mutex_;
  mutable std::vector<std::unique_ptr<Reference>> refs_;
};

/// Certainty-equivalence design: systems[estimate_index] plays the truth and
/// the minimum ranges over every other candidate.
inline ExcitationPlan design_ce_input(const Scenario& scenario, std::size_t estimate_index, int tau, const Vector& x0,
                                      const DesignOptions& opt = {}) {
  return ExcitationDesigner(scenario, tau, opt).design(estimate_index, x0);
}

/// Oracle design against the scenario's true system.
inline ExcitationPlan design_oracle_input(const Scenario& scenario, int tau, const Vector& x0,
                                          const DesignOptions& opt = {}) {
  return design_ce_input(scenario, scenario.true_index(), tau, x0, opt);
}

inline ExcitationPlan design_oracle_input(const Scenario& scenario, int tau, const DesignOptions& opt = {}) {
  return design_oracle_input(scenario, tau, Vector::Zero(scenario.n_x()), opt);
}

}  // namespace activeid
