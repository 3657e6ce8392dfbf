#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "activeid/error.hpp"
#include "activeid/linalg.hpp"

namespace activeid {

struct MixtureOptions {
  /// Target certified gap, relative to the largest spectral norm among the
  /// inputs.
  double tol = 1e-8;
  int max_iter = 5000;
  /// Iterations without progress (in either bound) after which the solver
  /// returns its best iterate.
  int stall_window = 400;
  /// Cutting-plane rounds after the descent phase when it has not converged.
  int polish_rounds = 300;
};

/// Approximate minimiser of p -> lambda_max(sum_i p_i W_i) over the simplex,
/// with a certificate: `value - certified_gap` is a proven lower bound.
struct MixtureSolution {
  Vector p;
  double value = 0.0;
  Vector top_vector;
  int iterations = 0;
  double certified_gap = 0.0;
  bool converged = false;
  /// Density X = sum_j dual_weights(j) q_j q_j^T (q_j the columns of
  /// dual_basis) attaining the lower bound min_i <W_i, X>.
  Matrix dual_basis;
  Vector dual_weights;

  double lower_bound() const { return value - certified_gap; }
};

class MixtureConvergenceError : public SolverError {
 public:
  MixtureConvergenceError(const std::string& what, MixtureSolution best)
      : SolverError(what), best_(std::move(best)) {}
  const MixtureSolution& best() const { return best_; }

 private:
  MixtureSolution best_;
};

namespace detail {

inline Matrix mix(std::span<const Matrix> ws, const Vector& p) {
  Matrix m = Matrix::Zero(ws[0].rows(), ws[0].cols());
  for (std::size_t i = 0; i < ws.size(); ++i) m.noalias() += p(static_cast<Eigen::Index>(i)) * ws[i];
  return m;
}

struct GameSolution {
  Vector row;  // minimising mixture over rows
  Vector col;  // maximising mixture over columns
  double value = 0.0;
};

/// Value of the zero-sum game min_p max_v (G^T p)_v by the simplex method on
/// max 1^T y s.t. G'^T y <= 1, y >= 0, with G' = G shifted positive.
/// Dantzig pricing, Bland's rule once pivots stop improving.
inline GameSolution solve_matrix_game(const Matrix& G) {
  const Eigen::Index n = G.rows();
  const Eigen::Index m = G.cols();
  const double shift = 1.0 - G.minCoeff();
  const Eigen::Index cols = n + m + 1;
  Matrix t = Matrix::Zero(m + 1, cols);
  t.topLeftCorner(m, n) = (G.array() + shift).matrix().transpose();
  t.block(0, n, m, m).setIdentity();
  t.col(cols - 1).head(m).setOnes();
  t.row(m).head(n).setConstant(-1.0);
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  for (Eigen::Index r = 0; r < m; ++r) basis[static_cast<std::size_t>(r)] = n + r;

  constexpr double eps = 1e-12;
  bool bland = false;
  int flat = 0;
  double obj = 0.0;
  for (int pivots = 0; pivots < 50 * static_cast<int>(n + m); ++pivots) {
    Eigen::Index enter = -1;
    double best = -eps;
    for (Eigen::Index j = 0; j < n + m; ++j) {
      if (t(m, j) < best) {
        enter = j;
        if (bland) break;
        best = t(m, j);
      }
    }
    if (enter < 0) break;
    Eigen::Index leave = -1;
    double ratio = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < m; ++r) {
      if (t(r, enter) <= eps) continue;
      const double q = t(r, cols - 1) / t(r, enter);
      if (q < ratio - 1e-15 || (q <= ratio + 1e-15 && leave >= 0 &&
                                basis[static_cast<std::size_t>(r)] < basis[static_cast<std::size_t>(leave)])) {
        ratio = q;
        leave = r;
      }
    }
    if (leave < 0) break;  // unbounded cannot happen with positive payoffs
    t.row(leave) /= t(leave, enter);
    for (Eigen::Index r = 0; r <= m; ++r)
      if (r != leave && t(r, enter) != 0.0) t.row(r) -= t(r, enter) * t.row(leave);
    basis[static_cast<std::size_t>(leave)] = enter;
    const double now = t(m, cols - 1);
    flat = now > obj + 1e-14 ? 0 : flat + 1;
    obj = std::max(obj, now);
    if (flat > 20) bland = true;
  }

  GameSolution sol;
  Vector y = Vector::Zero(n);
  for (Eigen::Index r = 0; r < m; ++r)
    if (basis[static_cast<std::size_t>(r)] < n) y(basis[static_cast<std::size_t>(r)]) = t(r, cols - 1);
  const double total = y.sum();
  sol.row = total > 0.0 ? Vector(y / total) : Vector(Vector::Constant(n, 1.0 / static_cast<double>(n)));
  sol.col = t.row(m).segment(n, m).transpose().cwiseMax(0.0);
  const double cs = sol.col.sum();
  sol.col = cs > 0.0 ? Vector(sol.col / cs) : Vector(Vector::Constant(m, 1.0 / static_cast<double>(m)));
  sol.value = (G.transpose() * sol.row).maxCoeff();
  return sol;
}

}  // namespace detail

/// Minimises lambda_max of a convex combination of symmetric matrices by
/// exponentiated-gradient (mirror) descent on the simplex.
///
/// The descent direction at p is g_i = <W_i, X>, where X is the
/// spectral-softmax density of the mixture at temperature mu. As mu -> 0 this
/// is the top-eigenvector subgradient v^T W_i v; keeping mu > 0 spreads X over
/// near-degenerate top eigenvalues, which is where the plain subgradient
/// stalls. Every such X is feasible for the dual problem, so min_i <W_i, X>
/// is a valid lower bound and the reported gap is a true certificate. mu is
/// driven down with the gap, and the step size adapts: it shrinks whenever
/// the smoothed objective increases.
inline MixtureSolution minimize_mixture(std::span<const Matrix> ws, const MixtureOptions& opt = {}) {
  detail::require(!ws.empty(), "minimize_mixture needs at least one matrix");
  const Eigen::Index n = ws[0].rows();
  for (std::size_t i = 0; i < ws.size(); ++i) {
    detail::require_dim(ws[i].rows() == n && ws[i].cols() == n,
                        "matrix " + std::to_string(i) + " is not " + std::to_string(n) + "x" + std::to_string(n));
    detail::require(linalg::is_symmetric(ws[i], 1e-10), "matrix " + std::to_string(i) + " is not symmetric");
  }
  detail::require(opt.tol > 0.0 && opt.max_iter >= 1, "invalid mixture solver options");

  const std::size_t N = ws.size();
  const Eigen::Index Ni = static_cast<Eigen::Index>(N);

  double scale = 0.0;
  for (const auto& w : ws) {
    const auto es = linalg::eig(linalg::symmetrized(w));
    scale = std::max({scale, std::abs(es.eigenvalues()(0)), std::abs(es.eigenvalues()(n - 1))});
  }

  MixtureSolution sol;
  if (scale == 0.0) {
    sol.p = Vector::Constant(Ni, 1.0 / static_cast<double>(N));
    sol.top_vector = Vector::Unit(n, 0);
    sol.converged = true;
    sol.dual_basis = sol.top_vector;
    sol.dual_weights = Vector::Ones(1);
    return sol;
  }

  std::vector<Matrix> wn;
  wn.reserve(N);
  for (const auto& w : ws) wn.push_back(linalg::symmetrized(w) / scale);

  const double log_n = std::log(std::max<double>(2.0, static_cast<double>(n)));
  const double mu_min = opt.tol / (16.0 * log_n);
  double mu = 0.05;
  double alpha = 1.0;

  Vector p = Vector::Constant(Ni, 1.0 / static_cast<double>(N));
  double best_f = std::numeric_limits<double>::infinity();
  Vector best_p = p;
  double lower = -std::numeric_limits<double>::infinity();
  Matrix dual_basis;
  Vector dual_weights;

  // Last accepted point, for step rejection.
  Vector prev_p;
  Vector prev_g;
  double prev_fmu = 0.0;
  double prev_mu = -1.0;

  std::vector<double> best_hist;
  std::vector<double> lower_hist;
  best_hist.reserve(static_cast<std::size_t>(opt.max_iter));
  lower_hist.reserve(static_cast<std::size_t>(opt.max_iter));

  bool converged = false;
  bool stalled = false;
  int it = 0;
  Vector g(Ni);
  for (it = 1; it <= opt.max_iter; ++it) {
    const auto es = linalg::eig(detail::mix(wn, p));
    const Vector& lam = es.eigenvalues();
    const Matrix& vecs = es.eigenvectors();
    const double f = lam(n - 1);
    if (f < best_f) {
      best_f = f;
      best_p = p;
    }

    // Rank-one certificate from the canonical top vector.
    {
      const Vector v = linalg::top_vector(es);
      double r1 = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < N; ++i) r1 = std::min(r1, v.dot(wn[i] * v));
      if (r1 > lower) {
        lower = r1;
        dual_basis = v;
        dual_weights = Vector::Ones(1);
      }
    }

    // Spectral softmax at temperature mu.
    auto smooth = [&](double temp, Vector& grad, Matrix& basis, Vector& weights) {
      std::vector<Eigen::Index> keep;
      std::vector<double> wts;
      double z = 0.0;
      for (Eigen::Index j = n - 1; j >= 0; --j) {
        const double w = std::exp((lam(j) - f) / temp);
        if (w < 1e-16) break;
        keep.push_back(j);
        wts.push_back(w);
        z += w;
      }
      basis.resize(n, static_cast<Eigen::Index>(keep.size()));
      weights.resize(static_cast<Eigen::Index>(keep.size()));
      for (std::size_t k = 0; k < keep.size(); ++k) {
        basis.col(static_cast<Eigen::Index>(k)) = vecs.col(keep[k]);
        weights(static_cast<Eigen::Index>(k)) = wts[k] / z;
      }
      for (std::size_t i = 0; i < N; ++i) {
        const Matrix wb = wn[i] * basis;
        grad(static_cast<Eigen::Index>(i)) = (basis.cwiseProduct(wb).colwise().sum().transpose().array() *
                                              weights.array())
                                                 .sum();
      }
      return f + temp * std::log(z);
    };

    Matrix basis;
    Vector weights;
    double fmu = smooth(mu, g, basis, weights);
    if (g.minCoeff() > lower) {
      lower = g.minCoeff();
      dual_basis = basis;
      dual_weights = weights;
    }

    best_hist.push_back(best_f);
    lower_hist.push_back(lower);
    const double gap = best_f - lower;
    if (gap <= opt.tol) {
      converged = true;
      break;
    }
    const int w = opt.stall_window;
    if (it > w) {
      const auto k = static_cast<std::size_t>(it - 1);
      const auto k0 = static_cast<std::size_t>(it - 1 - w);
      if (best_hist[k0] - best_hist[k] < opt.tol && lower_hist[k] - lower_hist[k0] < opt.tol) {
        stalled = true;
        break;
      }
    }

    const double mu_next = std::min(mu, std::max(mu_min, gap / (4.0 * log_n)));
    if (mu_next < mu) {
      mu = mu_next;
      fmu = smooth(mu, g, basis, weights);
      prev_mu = -1.0;
    }

    Vector step_from = p;
    Vector grad = g;
    if (prev_mu == mu && fmu > prev_fmu + 1e-15 * (1.0 + std::abs(prev_fmu))) {
      alpha *= 0.5;
      step_from = prev_p;
      grad = prev_g;
    } else {
      alpha = std::min(alpha * 1.25, 1e8);
      prev_p = p;
      prev_g = g;
      prev_fmu = fmu;
      prev_mu = mu;
    }
    const double gmin = grad.minCoeff();
    Vector next(Ni);
    for (Eigen::Index i = 0; i < Ni; ++i)
      next(i) = std::max(step_from(i) * std::exp(-alpha * (grad(i) - gmin)), 1e-300);
    p = next / next.sum();
  }
  if (it > opt.max_iter) it = opt.max_iter;

  // Cutting-plane polish. A degenerate top eigenvalue at the optimum makes
  // both the smoothed descent and its certificate crawl; the restricted game
  // over collected eigenvectors gives an exact dual density and a new primal
  // point each round.
  if (!converged) {
    const double window = std::max(best_f - lower, 1e-9);
    Matrix cols = dual_basis;
    auto add_top = [&](const Eigen::SelfAdjointEigenSolver<Matrix>& es, int most) {
      const double top = es.eigenvalues()(n - 1);
      int added = 0;
      for (Eigen::Index j = n - 1; j >= 0 && added < most; --j, ++added) {
        if (added > 0 && es.eigenvalues()(j) < top - window) break;
        cols.conservativeResize(n, cols.cols() + 1);
        cols.col(cols.cols() - 1) = es.eigenvectors().col(j);
      }
    };
    add_top(linalg::eig(detail::mix(wn, best_p)), static_cast<int>(std::min<Eigen::Index>(n, Ni + 1)));
    for (int round = 0; round < opt.polish_rounds; ++round) {
      Matrix G(Ni, cols.cols());
      for (std::size_t i = 0; i < N; ++i)
        G.row(static_cast<Eigen::Index>(i)) = cols.cwiseProduct(wn[i] * cols).colwise().sum();
      const detail::GameSolution game = detail::solve_matrix_game(G);
      const double lp_lower = (G * game.col).minCoeff();
      if (lp_lower > lower) {
        lower = lp_lower;
        std::vector<Eigen::Index> keep;
        for (Eigen::Index v = 0; v < game.col.size(); ++v)
          if (game.col(v) > 0.0) keep.push_back(v);
        dual_basis.resize(n, static_cast<Eigen::Index>(keep.size()));
        dual_weights.resize(static_cast<Eigen::Index>(keep.size()));
        for (std::size_t k = 0; k < keep.size(); ++k) {
          dual_basis.col(static_cast<Eigen::Index>(k)) = cols.col(keep[k]);
          dual_weights(static_cast<Eigen::Index>(k)) = game.col(keep[k]);
        }
        dual_weights /= dual_weights.sum();
      }
      const auto es = linalg::eig(detail::mix(wn, game.row));
      if (es.eigenvalues()(n - 1) < best_f) {
        best_f = es.eigenvalues()(n - 1);
        best_p = game.row;
      }
      if (best_f - lower <= opt.tol) {
        converged = true;
        break;
      }
      add_top(es, 3);
    }
  }

  sol.p = best_p / best_p.sum();
  const auto es = linalg::eig(detail::mix(wn, sol.p));
  sol.value = es.eigenvalues()(n - 1) * scale;
  sol.top_vector = linalg::top_vector(es);
  sol.iterations = it;
  sol.certified_gap = std::max(0.0, best_f - lower) * scale;
  sol.converged = converged;
  sol.dual_basis = dual_basis;
  sol.dual_weights = dual_weights;

  if (!converged && !stalled && best_f - lower > 100.0 * opt.tol) {
    throw MixtureConvergenceError("mixture solver exhausted " + std::to_string(opt.max_iter) +
                                      " iterations with certified gap " + std::to_string(sol.certified_gap),
                                  sol);
  }
  return sol;
}

}  // namespace activeid
