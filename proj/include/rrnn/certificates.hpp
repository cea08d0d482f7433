#pragma once

// Convex certificates for the implicit model. Each set is defined by one
// linear matrix inequality in (theta, P), stored in lifted Schur-complement
// form so that it is linear in every decision variable.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "rrnn/models.hpp"
#include "rrnn/numerics.hpp"

namespace rrnn {

enum class ConstraintKind { RobustStar, RobustGamma, CiRnnContraction };

inline std::string_view to_string(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::RobustStar: return "robust-star";
    case ConstraintKind::RobustGamma: return "robust-gamma";
    case ConstraintKind::CiRnnContraction: return "cirnn-contraction";
  }
  return "?";
}

inline ConstraintKind constraint_from_string(std::string_view s) {
  if (s == "robust-star") return ConstraintKind::RobustStar;
  if (s == "robust-gamma") return ConstraintKind::RobustGamma;
  if (s == "cirnn-contraction") return ConstraintKind::CiRnnContraction;
  throw std::invalid_argument("unknown constraint kind '" + std::string(s) + "'");
}

/// Model parameters together with the certificate P. For CiRnnContraction
/// theta holds a ci-RNN with Lambda = I, so its contraction matrix is read
/// from C2 and the nonlinearity feeds the state through B1 = I.
struct CertifiedBundle {
  ImplicitParams theta;
  MatrixXd P;
  ConstraintKind kind = ConstraintKind::RobustStar;
  double gamma = 0.0;  // meaningful iff kind == RobustGamma
};

struct FeasibilityReport {
  double lmi_margin = 0.0;  // smallest eigenvalue of the lifted LMI
  double P_margin = 0.0;    // smallest eigenvalue of P
  double lambda_min = 0.0;
  bool feasible = false;
};

namespace detail {

struct BlockLayout {
  std::vector<Eigen::Index> offset;
  Eigen::Index total = 0;
  explicit BlockLayout(std::initializer_list<Eigen::Index> sizes) {
    for (auto s : sizes) {
      offset.push_back(total);
      total += s;
    }
  }
  Eigen::Index at(std::size_t i) const { return offset[i]; }
};

inline void check_bundle_dims(const CertifiedBundle& b) {
  b.theta.validate();
  detail::expect_shape(b.P, b.theta.n(), b.theta.n(), "P");
  if (b.kind == ConstraintKind::RobustGamma && !(b.gamma > 0.0)) {
    throw DimensionError("robust-gamma bundle requires gamma > 0");
  }
  if (b.kind == ConstraintKind::CiRnnContraction && b.theta.q() != b.theta.n()) {
    throw DimensionError("cirnn-contraction bundle requires q == n");
  }
}

}  // namespace detail

/// Lifted LMI for the bundle's constraint kind.
///
/// RobustStar (blocks x, w, x+):
///   [ E+E'-P   -b*C2'   F'  ]
///   [ -b*C2    2*Lam    B1' ]
///   [ F        B1       P   ]
/// RobustGamma (blocks x, w, u, x+, y):
///   [ E+E'-P   -b*C2'    0        F'   C1'  ]
///   [ -b*C2    2*Lam    -b*D22    B1'  D11' ]
///   [ 0        -b*D22'   g*I      B2'  D12' ]
///   [ F        B1        B2       P    0    ]
///   [ C1       D11       D12      0    g*I  ]
/// CiRnnContraction:
///   [ E+E'-P   C2' ]
///   [ C2       P   ]
inline SymMatrix assemble_lmi(const CertifiedBundle& bundle) {
  detail::check_bundle_dims(bundle);
  const ImplicitParams& th = bundle.theta;
  const Eigen::Index n = th.n(), q = th.q(), m = th.m(), p = th.p();
  const double beta = th.beta;
  const MatrixXd top_left = th.E + th.E.transpose() - bundle.P;

  switch (bundle.kind) {
    case ConstraintKind::RobustStar: {
      detail::BlockLayout L{n, q, n};
      MatrixXd M = MatrixXd::Zero(L.total, L.total);
      M.block(L.at(0), L.at(0), n, n) = top_left;
      M.block(L.at(1), L.at(0), q, n) = -beta * th.C2;
      M.block(L.at(0), L.at(1), n, q) = -beta * th.C2.transpose();
      M.block(L.at(1), L.at(1), q, q) = 2.0 * th.lambda.asDiagonal();
      M.block(L.at(2), L.at(0), n, n) = th.F;
      M.block(L.at(0), L.at(2), n, n) = th.F.transpose();
      M.block(L.at(2), L.at(1), n, q) = th.B1;
      M.block(L.at(1), L.at(2), q, n) = th.B1.transpose();
      M.block(L.at(2), L.at(2), n, n) = bundle.P;
      return SymMatrix(M);
    }
    case ConstraintKind::RobustGamma: {
      const double g = bundle.gamma;
      detail::BlockLayout L{n, q, m, n, p};
      MatrixXd M = MatrixXd::Zero(L.total, L.total);
      auto put = [&](std::size_t r, std::size_t c, const MatrixXd& X) {
        M.block(L.at(r), L.at(c), X.rows(), X.cols()) = X;
        if (r != c) M.block(L.at(c), L.at(r), X.cols(), X.rows()) = X.transpose();
      };
      put(0, 0, top_left);
      put(1, 0, -beta * th.C2);
      put(1, 1, MatrixXd(2.0 * th.lambda.asDiagonal()));
      put(1, 2, -beta * th.D22);
      put(2, 2, g * MatrixXd::Identity(m, m));
      put(3, 0, th.F);
      put(3, 1, th.B1);
      put(3, 2, th.B2);
      put(3, 3, bundle.P);
      put(4, 0, th.C1);
      put(4, 1, th.D11);
      put(4, 2, th.D12);
      put(4, 4, g * MatrixXd::Identity(p, p));
      return SymMatrix(M);
    }
    case ConstraintKind::CiRnnContraction: {
      MatrixXd M(2 * n, 2 * n);
      M << top_left, th.C2.transpose(), th.C2, bundle.P;
      return SymMatrix(M);
    }
  }
  throw std::logic_error("assemble_lmi: unknown kind");
}

/// Gradient of a scalar function f(M) with respect to the bundle variables,
/// given G = df/dM for the symmetric lifted matrix M = assemble_lmi(bundle).
struct BundleGradient {
  ImplicitParams theta;  // same shapes as the bundle's theta, zero-filled
  MatrixXd P;
};

inline BundleGradient zero_gradient(const CertifiedBundle& b) {
  const auto& t = b.theta;
  BundleGradient g;
  g.theta = ImplicitParams::zeros(t.n(), t.q(), t.m(), t.p(), t.activation);
  g.theta.E.setZero();
  g.theta.lambda.setZero();
  g.P = MatrixXd::Zero(t.n(), t.n());
  return g;
}

/// Adjoint of assemble_lmi: accumulates <G, dM> into per-variable gradients.
inline void lmi_adjoint(const CertifiedBundle& bundle, const MatrixXd& G, BundleGradient& out) {
  const ImplicitParams& th = bundle.theta;
  const Eigen::Index n = th.n(), q = th.q(), m = th.m(), p = th.p();
  const double beta = th.beta;
  ImplicitParams& gt = out.theta;
  switch (bundle.kind) {
    case ConstraintKind::RobustStar: {
      detail::BlockLayout L{n, q, n};
      const MatrixXd G00 = G.block(L.at(0), L.at(0), n, n);
      gt.E += G00 + G00.transpose();
      out.P += -G00 + G.block(L.at(2), L.at(2), n, n);
      gt.C2 += -2.0 * beta * G.block(L.at(1), L.at(0), q, n);
      gt.lambda += 2.0 * G.block(L.at(1), L.at(1), q, q).diagonal();
      gt.F += 2.0 * G.block(L.at(2), L.at(0), n, n);
      gt.B1 += 2.0 * G.block(L.at(2), L.at(1), n, q);
      return;
    }
    case ConstraintKind::RobustGamma: {
      detail::BlockLayout L{n, q, m, n, p};
      auto blk = [&](std::size_t r, std::size_t c, Eigen::Index rows, Eigen::Index cols) {
        return G.block(L.at(r), L.at(c), rows, cols);
      };
      const MatrixXd G00 = blk(0, 0, n, n);
      gt.E += G00 + G00.transpose();
      out.P += -G00 + blk(3, 3, n, n);
      gt.C2 += -2.0 * beta * blk(1, 0, q, n);
      gt.lambda += 2.0 * blk(1, 1, q, q).diagonal();
      gt.D22 += -2.0 * beta * blk(1, 2, q, m);
      gt.F += 2.0 * blk(3, 0, n, n);
      gt.B1 += 2.0 * blk(3, 1, n, q);
      gt.B2 += 2.0 * blk(3, 2, n, m);
      gt.C1 += 2.0 * blk(4, 0, p, n);
      gt.D11 += 2.0 * blk(4, 1, p, q);
      gt.D12 += 2.0 * blk(4, 2, p, m);
      return;
    }
    case ConstraintKind::CiRnnContraction: {
      const MatrixXd G00 = G.topLeftCorner(n, n);
      gt.E += G00 + G00.transpose();
      out.P += -G00 + G.bottomRightCorner(n, n);
      gt.C2 += 2.0 * G.bottomLeftCorner(n, n);
      return;
    }
  }
}

inline FeasibilityReport feasibility_margin(const CertifiedBundle& bundle,
                                            double eps = kStrictEps) {
  FeasibilityReport rep;
  const SymMatrix lmi = assemble_lmi(bundle);
  const SymMatrix P(bundle.P);
  rep.lmi_margin = min_eigenvalue(lmi);
  rep.P_margin = min_eigenvalue(P);
  rep.lambda_min = bundle.kind == ConstraintKind::CiRnnContraction
                       ? 1.0
                       : (bundle.theta.q() > 0 ? bundle.theta.lambda.minCoeff() : 1.0);
  if (!lmi.matrix().allFinite() || !P.matrix().allFinite()) return rep;
  rep.feasible = rep.lambda_min >= eps && pd_margin(P, eps) && pd_margin(lmi, eps);
  return rep;
}

/// [dv; dw]' M(Lambda) [dv; dw] with M(Lambda) = [[0, beta*Lam], [beta*Lam, -2*Lam]].
inline double iqc_quadratic_form(const VectorXd& lambda, double beta, const VectorXd& dv,
                                 const VectorXd& dw) {
  if (dv.size() != lambda.size() || dw.size() != lambda.size()) {
    throw DimensionError("iqc_quadratic_form: vector lengths differ from Lambda");
  }
  return (lambda.array() * (2.0 * beta * dv.array() * dw.array() - 2.0 * dw.array().square()))
      .sum();
}

// ---------------------------------------------------------------------------
// Embeddings

class NotStable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solves Pl - A' Pl A = I by summing (A')^k A^k until the increment is
/// below 1e-14 in Frobenius norm.
inline MatrixXd discrete_lyapunov_identity(const MatrixXd& A, int max_terms = 1000000) {
  detail::expect_shape(A, A.rows(), A.rows(), "A");
  const Eigen::Index n = A.rows();
  MatrixXd term = MatrixXd::Identity(n, n);
  MatrixXd sum = term;
  for (int k = 0; k < max_terms; ++k) {
    term = A.transpose() * term * A;
    sum += term;
    const double inc = term.norm();
    if (!std::isfinite(inc) || inc > 1e300) break;
    if (inc < 1e-14) return 0.5 * (sum + sum.transpose());
  }
  throw NotStable("discrete_lyapunov_identity: series did not converge; A is not Schur stable");
}

/// Stable LTI system x+ = A x + B u, y = C x + D u as a Robust RNN in Theta_*.
inline CertifiedBundle embed_lti(const MatrixXd& A, const MatrixXd& B, const MatrixXd& C,
                                 const MatrixXd& D, Eigen::Index q = -1,
                                 Activation act = Activation::relu) {
  const Eigen::Index n = A.rows(), m = B.cols(), p = C.rows();
  detail::expect_shape(A, n, n, "A");
  detail::expect_shape(B, n, m, "B");
  detail::expect_shape(C, p, n, "C");
  detail::expect_shape(D, p, m, "D");
  if (q < 0) q = n;
  const MatrixXd Pl = discrete_lyapunov_identity(A);
  CertifiedBundle out;
  out.theta = ImplicitParams::zeros(n, q, m, p, act);
  out.theta.E = Pl;
  out.theta.F = Pl * A;
  out.theta.B2 = Pl * B;
  out.theta.C1 = C;
  out.theta.D12 = D;
  out.P = Pl;
  out.kind = ConstraintKind::RobustStar;
  return out;
}

/// Lifted contraction matrix [[E+E'-diag(p), F'], [F, diag(p)]] of a ci-RNN.
inline SymMatrix contraction_lmi(const CiRnn& net, const VectorXd& p_diag) {
  const Eigen::Index n = net.n();
  detail::expect_size(p_diag, n, "P");
  MatrixXd M(2 * n, 2 * n);
  const MatrixXd P = p_diag.asDiagonal();
  M << net.E + net.E.transpose() - P, net.F.transpose(), net.F, P;
  return SymMatrix(M);
}

/// ci-RNN in the CiRnnContraction bundle layout (Lambda = I, C2 = F).
inline CertifiedBundle contraction_bundle(const CiRnn& net, const VectorXd& p_diag) {
  const Eigen::Index n = net.n(), m = net.B.cols(), p = net.C.rows();
  CertifiedBundle out;
  out.theta = ImplicitParams::zeros(n, n, m, p, net.activation);
  out.theta.E = net.E;
  out.theta.B1 = MatrixXd::Identity(n, n);
  out.theta.C2 = net.F;
  out.theta.b = net.b;
  out.theta.D22 = net.B;
  out.theta.C1 = net.C;
  out.theta.D12 = net.D;
  out.P = p_diag.asDiagonal();
  out.kind = ConstraintKind::CiRnnContraction;
  return out;
}

/// ci-RNN with diagonal contraction certificate p_diag as a Robust RNN in Theta_*.
inline CertifiedBundle embed_cirnn(const CiRnn& net, const VectorXd& p_diag) {
  const Eigen::Index n = net.n(), m = net.B.cols(), p = net.C.rows();
  detail::expect_shape(net.E, n, n, "E");
  detail::expect_shape(net.F, n, n, "F");
  detail::expect_shape(net.B, n, m, "B");
  detail::expect_size(net.b, n, "b");
  detail::expect_shape(net.C, p, n, "C");
  detail::expect_shape(net.D, p, m, "D");
  if ((p_diag.array() <= 0.0).any()) {
    throw std::invalid_argument("embed_cirnn: certificate must have positive diagonal");
  }
  if (!pd_margin(contraction_lmi(net, p_diag))) {
    throw std::invalid_argument("embed_cirnn: contraction LMI does not hold for the given certificate");
  }
  const VectorXd lambda = p_diag.cwiseInverse();
  CertifiedBundle out;
  out.theta = ImplicitParams::zeros(n, n, m, p, net.activation);
  out.theta.E = net.E;
  out.theta.F.setZero();
  out.theta.B1 = MatrixXd::Identity(n, n);
  out.theta.C1 = net.C;
  out.theta.D12 = net.D;
  out.theta.lambda = lambda;
  out.theta.C2 = lambda.asDiagonal() * net.F;
  out.theta.D22 = lambda.asDiagonal() * net.B;
  out.theta.b = net.b.cwiseProduct(lambda);
  out.P = p_diag.asDiagonal();
  out.kind = ConstraintKind::RobustStar;
  return out;
}

// ---------------------------------------------------------------------------
// Certified gain

/// True iff the RobustGamma LMI holds at (theta, P, gamma) with margin eps.
inline bool gamma_feasible(const ImplicitParams& theta, const MatrixXd& P, double gamma,
                           double eps = kStrictEps) {
  CertifiedBundle b{theta, P, ConstraintKind::RobustGamma, gamma};
  return pd_margin(assemble_lmi(b), eps) && pd_margin(SymMatrix(P), eps) &&
         theta.lambda.minCoeff() >= eps;
}

/// Smallest gamma in [lo, hi] (relative tolerance tol) for which the
/// RobustGamma LMI holds with theta and P held fixed. This is a certified
/// upper bound on the incremental gain; it may be conservative because P is
/// not re-optimized.
inline double bisect_gamma(const ImplicitParams& theta, const MatrixXd& P, double lo, double hi,
                           double tol = 1e-6) {
  if (!(lo > 0.0) || !(hi > lo) || !(tol > 0.0)) {
    throw std::invalid_argument("bisect_gamma: need 0 < lo < hi and tol > 0");
  }
  if (!gamma_feasible(theta, P, hi)) {
    throw std::runtime_error("bisect_gamma: LMI infeasible at gamma = " + std::to_string(hi));
  }
  if (gamma_feasible(theta, P, lo)) return lo;
  while (hi - lo > tol * hi) {
    const double mid = 0.5 * (lo + hi);
    if (gamma_feasible(theta, P, mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

/// Doubles gamma from `start` until the LMI holds; nullopt past `limit`.
inline std::optional<double> find_feasible_gamma(const ImplicitParams& theta, const MatrixXd& P,
                                                 double start = 1.0, double limit = 1e12) {
  for (double g = start; g <= limit; g *= 2.0) {
    if (gamma_feasible(theta, P, g)) return g;
  }
  return std::nullopt;
}

}  // namespace rrnn
