#pragma once

// Dense symmetric linear algebra used by the certificates and the barrier:
// Cholesky with pivot reporting, log-determinant, positive-definite solves.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace rrnn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Numerical margin used to operationalize strict matrix inequalities.
inline constexpr double kStrictEps = 1e-8;

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NotPositiveDefinite : public std::runtime_error {
 public:
  NotPositiveDefinite(Eigen::Index pivot, const std::string& what)
      : std::runtime_error(what), pivot_(pivot) {}
  Eigen::Index pivot() const { return pivot_; }

 private:
  Eigen::Index pivot_;
};

inline bool all_finite(const MatrixXd& m) { return m.allFinite(); }

/// Symmetric matrix. Storage is symmetrized as (M + M^T)/2 on construction,
/// so entries(i,j) == entries(j,i) holds bit-exactly afterwards.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const MatrixXd& m) {
    if (m.rows() != m.cols()) {
      throw InvalidInput("SymMatrix: matrix is " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + ", expected square");
    }
    data_ = 0.5 * (m + m.transpose());
  }

  static SymMatrix identity(Eigen::Index n) { return SymMatrix(MatrixXd::Identity(n, n)); }
  static SymMatrix diagonal(const VectorXd& d) { return SymMatrix(MatrixXd(d.asDiagonal())); }

  Eigen::Index dim() const { return data_.rows(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return data_(i, j); }
  const MatrixXd& matrix() const { return data_; }

  SymMatrix shifted(double s) const {
    SymMatrix out = *this;
    out.data_.diagonal().array() += s;
    return out;
  }

 private:
  MatrixXd data_;
};

struct PdReport {
  bool is_pd = false;
  double margin = 0.0;  // min_i L_ii^2, 0 when the factorization failed
  double logdet = std::numeric_limits<double>::quiet_NaN();  // valid iff is_pd
  Eigen::Index failed_pivot = -1;
  MatrixXd lower;  // Cholesky factor, valid iff is_pd
};

/// Cholesky factorization M = L L^T. Returns is_pd=false on the first
/// nonpositive pivot. Non-finite entries raise InvalidInput.
inline PdReport cholesky_logdet(const SymMatrix& m) {
  const MatrixXd& a = m.matrix();
  if (!all_finite(a)) throw InvalidInput("cholesky_logdet: matrix has non-finite entries");
  const Eigen::Index n = a.rows();
  PdReport rep;
  MatrixXd l = MatrixXd::Zero(n, n);
  double logdet = 0.0;
  double margin = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) {
      rep.failed_pivot = j;
      return rep;
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    logdet += std::log(ljj);
    margin = std::min(margin, d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  rep.is_pd = true;
  rep.margin = n == 0 ? 0.0 : margin;
  rep.logdet = 2.0 * logdet;
  rep.lower = std::move(l);
  return rep;
}

/// Solves M X = B for positive definite M.
inline MatrixXd solve_pd(const SymMatrix& m, const MatrixXd& b) {
  if (b.rows() != m.dim()) {
    throw InvalidInput("solve_pd: right-hand side has " + std::to_string(b.rows()) +
                       " rows, matrix has dimension " + std::to_string(m.dim()));
  }
  PdReport rep = cholesky_logdet(m);
  if (!rep.is_pd) {
    throw NotPositiveDefinite(rep.failed_pivot, "solve_pd: matrix is not positive definite (pivot " +
                                                    std::to_string(rep.failed_pivot) + " failed)");
  }
  MatrixXd y = rep.lower.triangularView<Eigen::Lower>().solve(b);
  return rep.lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

inline MatrixXd inverse_pd(const SymMatrix& m) {
  return solve_pd(m, MatrixXd::Identity(m.dim(), m.dim()));
}

/// True iff M - eps*I is strictly positive definite.
inline bool pd_margin(const SymMatrix& m, double eps = kStrictEps) {
  if (eps < 0.0) throw InvalidInput("pd_margin: eps must be nonnegative");
  return cholesky_logdet(m.shifted(-eps)).is_pd;
}

/// Smallest eigenvalue; used for reporting margins, not for the PD verdict.
inline double min_eigenvalue(const SymMatrix& m) {
  if (m.dim() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m.matrix(), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

}  // namespace rrnn
