#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "activeid/error.hpp"
#include "activeid/geometry.hpp"
#include "activeid/linalg.hpp"
#include "activeid/lti.hpp"
#include "activeid/mixture.hpp"

namespace activeid {

/// Right-hand side 2 log(1 / (2.4 delta)) of the sample-complexity lower bound.
inline double threshold(double delta) {
  detail::require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
  return 2.0 * std::log(1.0 / (2.4 * delta));
}

namespace input {

struct Deterministic {
  Vector U;
};
/// u(t) i.i.d. N(0, sigma_u2 I).
struct Isotropic {
  double sigma_u2 = 0.0;
};
/// The optimal excitation at the energy budget; evaluated through the
/// mixture relaxation.
struct Optimal {};

}  // namespace input

using InputDescriptor = std::variant<input::Deterministic, input::Isotropic, input::Optimal>;

/// Isotropic input spending the scenario's full budget: sigma_u2 = gamma_u^2 / n_u.
inline input::Isotropic isotropic_input(const Scenario& scenario) {
  return {scenario.gamma_u() * scenario.gamma_u() / static_cast<double>(scenario.n_u())};
}

enum class InputKind { optimal, isotropic };

struct LowerBoundReport {
  int horizon = 0;
  std::vector<double> lhs_per_candidate;
  double lhs = 0.0;
  double threshold = 0.0;
  bool satisfied = false;
  /// Optimal kind only: the mixture term plus the smallest / largest noise
  /// trace. `lhs` is the max-trace variant for that kind.
  double lhs_min_trace = 0.0;
  double lhs_max_trace = 0.0;
  /// Deterministic kind only: |U|^2 exceeded gamma_u^2 * horizon.
  bool budget_exceeded = false;
};

namespace detail {

/// Largest eigenpair of a symmetric operator by Lanczos with full
/// reorthogonalisation. Deterministic start vector.
template <class Apply>
std::pair<double, Vector> lanczos_top(Apply&& apply, Eigen::Index dim, double rel_tol = 1e-10) {
  Vector q0(dim);
  for (Eigen::Index j = 0; j < dim; ++j) q0(j) = 1.0 + 0.5 * std::sin(0.7 * static_cast<double>(j) + 0.3);
  q0.normalize();
  Eigen::Index steps = std::min<Eigen::Index>(dim, 40);
  while (true) {
    Matrix Q(dim, steps);
    std::vector<double> alpha;
    std::vector<double> beta;
    Q.col(0) = q0;
    Eigen::Index k = 0;
    for (; k < steps; ++k) {
      Vector w = apply(Vector(Q.col(k)));
      alpha.push_back(Q.col(k).dot(w));
      w -= Q.leftCols(k + 1) * (Q.leftCols(k + 1).transpose() * w);
      w -= Q.leftCols(k + 1) * (Q.leftCols(k + 1).transpose() * w);
      const double b = w.norm();
      if (k + 1 == steps) {
        beta.push_back(b);
        break;
      }
      if (b <= 1e-13 * (1.0 + std::abs(alpha.back()))) {
        beta.push_back(0.0);
        break;
      }
      beta.push_back(b);
      Q.col(k + 1) = w / b;
    }
    const Eigen::Index m = static_cast<Eigen::Index>(alpha.size());
    Matrix T = Matrix::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      T(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[static_cast<std::size_t>(i)];
    }
    const auto es = linalg::eig(T);
    const double theta = es.eigenvalues()(m - 1);
    const Vector s = es.eigenvectors().col(m - 1);
    const double resid = std::abs(beta.back() * s(m - 1));
    if (resid <= rel_tol * (1.0 + std::abs(theta)) || m < steps || steps >= dim || steps >= 800) {
      Vector v = Q.leftCols(m) * s;
      v.normalize();
      linalg::canonical_sign(v);
      return {theta, v};
    }
    steps = std::min<Eigen::Index>(dim, 2 * steps);
  }
}

/// min_p lambda_max(sum p_i W_i) for operators too large to assemble, by
/// exponentiated subgradient descent. Returns the best value seen, which is
/// an upper estimate of the minimum.
inline double mixture_value_matrix_free(const std::vector<GapOperator>& ops, int iterations = 200) {
  const std::size_t n = ops.size();
  const Eigen::Index dim = ops.front().dim();
  auto top = [&](const Vector& p) {
    return lanczos_top(
        [&](const Vector& v) {
          Vector out = Vector::Zero(dim);
          for (std::size_t i = 0; i < n; ++i)
            if (p(static_cast<Eigen::Index>(i)) > 0.0) out += p(static_cast<Eigen::Index>(i)) * ops[i].apply(v);
          return out;
        },
        dim);
  };
  Vector p = Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
  if (n == 1) return top(p).first;
  double best = std::numeric_limits<double>::infinity();
  double scale = 0.0;
  Vector g(static_cast<Eigen::Index>(n));
  for (int k = 1; k <= iterations; ++k) {
    const auto [f, v] = top(p);
    best = std::min(best, f);
    for (std::size_t i = 0; i < n; ++i) g(static_cast<Eigen::Index>(i)) = ops[i].quadratic(v);
    scale = std::max(scale, g.cwiseAbs().maxCoeff());
    if (scale == 0.0) return 0.0;
    const double step = std::sqrt(2.0 * std::log(static_cast<double>(n)) / k) / scale;
    const double gmin = g.minCoeff();
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) *= std::exp(-step * (g(i) - gmin));
    p /= p.sum();
  }
  return best;
}

// Dense assembly is cheaper than Lanczos below this many input coordinates.
inline constexpr Eigen::Index kDenseLimit = 300;

}  // namespace detail

/// Evaluates the left-hand side of the sample-complexity lower bound at
/// horizon T for the given input and confidence level delta.
inline LowerBoundReport lower_bound_lhs(const Scenario& scenario, const InputDescriptor& in, int horizon,
                                        double delta) {
  detail::require(horizon >= 1, "horizon must be >= 1, got " + std::to_string(horizon));
  LowerBoundReport rep;
  rep.horizon = horizon;
  rep.threshold = threshold(delta);

  std::vector<GapOperator> ops;
  for (std::size_t i = 0; i < scenario.size(); ++i)
    if (i != scenario.true_index()) ops.emplace_back(scenario.truth(), scenario.system(i), scenario.noise(), horizon);
  std::vector<double> traces;
  for (const auto& op : ops) traces.push_back(op.noise_trace());
  const double budget = scenario.gamma_u() * scenario.gamma_u() * horizon;

  if (const auto* det = std::get_if<input::Deterministic>(&in)) {
    detail::require_dim(det->U.size() == scenario.n_u() * horizon,
                        "stacked input has length " + std::to_string(det->U.size()) + ", expected " +
                            std::to_string(scenario.n_u() * horizon));
    rep.budget_exceeded = det->U.squaredNorm() > budget * (1.0 + 1e-9);
    for (std::size_t i = 0; i < ops.size(); ++i) rep.lhs_per_candidate.push_back(ops[i].quadratic(det->U) + traces[i]);
  } else if (const auto* iso = std::get_if<input::Isotropic>(&in)) {
    detail::require(iso->sigma_u2 >= 0.0, "sigma_u2 must be nonnegative");
    for (std::size_t i = 0; i < ops.size(); ++i)
      rep.lhs_per_candidate.push_back(iso->sigma_u2 * ops[i].trace() + traces[i]);
  } else {
    double value = 0.0;
    if (ops.front().dim() <= detail::kDenseLimit) {
      std::vector<Matrix> ws;
      for (const auto& p : alternative_profiles(scenario, horizon)) ws.push_back(p.W);
      try {
        value = minimize_mixture(ws).value;
      } catch (const MixtureConvergenceError& e) {
        value = e.best().value;
      }
    } else {
      value = detail::mixture_value_matrix_free(ops);
    }
    const double input_term = budget * value;
    for (double t : traces) rep.lhs_per_candidate.push_back(input_term + t);
    rep.lhs_min_trace = input_term + *std::min_element(traces.begin(), traces.end());
    rep.lhs_max_trace = input_term + *std::max_element(traces.begin(), traces.end());
    rep.lhs = rep.lhs_max_trace;
    rep.satisfied = rep.lhs >= rep.threshold;
    return rep;
  }
  rep.lhs = *std::min_element(rep.lhs_per_candidate.begin(), rep.lhs_per_candidate.end());
  rep.lhs_min_trace = rep.lhs_max_trace = rep.lhs;
  rep.satisfied = rep.lhs >= rep.threshold;
  return rep;
}

/// Smallest horizon at which the lower bound for the given input kind is met.
/// Doubling, then bisection; the LHS is nondecreasing in the horizon.
inline int min_horizon(const Scenario& scenario, InputKind kind, double delta, int cap = 100000) {
  detail::require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
  detail::require(cap >= 1, "horizon cap must be >= 1");
  const InputDescriptor in = kind == InputKind::optimal ? InputDescriptor{input::Optimal{}}
                                                        : InputDescriptor{isotropic_input(scenario)};
  auto ok = [&](int t) { return lower_bound_lhs(scenario, in, t, delta).satisfied; };
  if (ok(1)) return 1;
  int lo = 1;
  int hi = 2;
  while (!ok(hi)) {
    if (hi >= cap)
      throw SolverError("lower bound not met within the horizon cap of " + std::to_string(cap));
    lo = hi;
    hi = std::min(2 * hi, cap);
  }
  while (hi - lo > 1) {
    const int mid = lo + (hi - lo) / 2;
    (ok(mid) ? hi : lo) = mid;
  }
  return hi;
}

/// How much an optimal design beats isotropic excitation, per unit energy.
struct BenefitDiagnostic {
  int tau = 0;
  double c_opt = 0.0;
  double c_rand = 0.0;
  double ratio = 0.0;
  double noise_floor = 0.0;
};

inline BenefitDiagnostic benefit(const Scenario& scenario, int tau, const MixtureOptions& opt = {}) {
  const PECoefficients o = pe_optimal(scenario, tau, opt);
  const PECoefficients r = pe_random(scenario, tau);
  BenefitDiagnostic b;
  b.tau = tau;
  b.c_opt = o.c_u;
  b.c_rand = r.c_u;
  b.ratio = r.c_u > 0.0 ? o.c_u / r.c_u : std::numeric_limits<double>::infinity();
  b.noise_floor = r.c_w;
  return b;
}

}  // namespace activeid
