#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "activeid/error.hpp"

namespace activeid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace linalg {

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline bool is_symmetric(const Matrix& m, double rel_tol) {
  if (m.rows() != m.cols()) return false;
  return max_abs(m - m.transpose()) <= rel_tol * std::max(1.0, max_abs(m));
}

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Eigenvalues ascending, eigenvectors in columns.
inline Eigen::SelfAdjointEigenSolver<Matrix> eig(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) throw SolverError("symmetric eigensolver failed");
  return es;
}

inline double lambda_max(const Matrix& m) { return eig(m).eigenvalues()(m.rows() - 1); }

inline double lambda_mean(const Matrix& m) { return m.trace() / static_cast<double>(m.rows()); }

/// Flip sign so the first component with magnitude above `tol` is positive.
inline void canonical_sign(Vector& v, double tol = 1e-12) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > tol) {
      if (v(i) < 0.0) v = -v;
      return;
    }
  }
}

/// Orthonormal basis of the eigenspace whose eigenvalues lie within
/// `rel_tol * (1 + |lambda_max|)` of the top eigenvalue.
inline Matrix top_eigenspace(const Eigen::SelfAdjointEigenSolver<Matrix>& es, double rel_tol = 1e-9) {
  const auto& ev = es.eigenvalues();
  const Eigen::Index n = ev.size();
  const double top = ev(n - 1);
  const double window = rel_tol * (1.0 + std::abs(top));
  Eigen::Index first = n - 1;
  while (first > 0 && top - ev(first - 1) <= window) --first;
  return es.eigenvectors().rightCols(n - first);
}

/// Deterministic unit vector from a (possibly degenerate) top eigenspace:
/// the projection of the lowest-index coordinate axis that has a nonzero
/// component in the space, normalised and sign-fixed.
inline Vector top_vector(const Eigen::SelfAdjointEigenSolver<Matrix>& es, double rel_tol = 1e-9) {
  const Matrix basis = top_eigenspace(es, rel_tol);
  Vector v;
  if (basis.cols() == 1) {
    v = basis.col(0);
  } else {
    for (Eigen::Index j = 0; j < basis.rows(); ++j) {
      Vector proj = basis * basis.row(j).transpose();
      if (proj.norm() > 1e-8) {
        v = proj.normalized();
        break;
      }
    }
  }
  canonical_sign(v);
  return v;
}

/// A^0, A^1, ..., A^count by repeated multiplication.
inline std::vector<Matrix> powers(const Matrix& a, int count) {
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(count) + 1);
  out.push_back(Matrix::Identity(a.rows(), a.cols()));
  for (int k = 1; k <= count; ++k) out.push_back(a * out.back());
  return out;
}

}  // namespace linalg
}  // namespace activeid
