#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <cmath>
#include <functional>
#include <random>

#include "rrnn/rrnn.hpp"

namespace oracle {

using rrnn::MatrixXd;
using rrnn::VectorXd;

inline MatrixXd randn(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = nd(rng);
  return m;
}

/// Strict positive definiteness by plain LDL' with no pivoting.
inline bool is_pd(const MatrixXd& a) {
  Eigen::LLT<MatrixXd> llt(0.5 * (a + a.transpose()));
  return llt.info() == Eigen::Success;
}

/// Non-lifted robust-star condition: P > 0 and
/// [[E+E'-P, -b C2'], [-b C2, 2 Lam]] - [F'; B1'] P^{-1} [F, B1] > 0.
inline bool star_direct(const rrnn::CertifiedBundle& bd) {
  const auto& t = bd.theta;
  const Eigen::Index n = t.n(), q = t.q();
  if (!is_pd(bd.P)) return false;
  MatrixXd H(n + q, n + q);
  H << t.E + t.E.transpose() - bd.P, -t.beta * t.C2.transpose(), -t.beta * t.C2,
      MatrixXd(2.0 * t.lambda.asDiagonal());
  MatrixXd K(n, n + q);
  K << t.F, t.B1;
  return is_pd(H - K.transpose() * bd.P.inverse() * K);
}

/// Non-lifted robust-gamma condition with the two Schur terms written out.
inline bool gamma_direct(const rrnn::CertifiedBundle& bd) {
  const auto& t = bd.theta;
  const Eigen::Index n = t.n(), q = t.q(), m = t.m();
  const double g = bd.gamma;
  if (!is_pd(bd.P)) return false;
  MatrixXd H = MatrixXd::Zero(n + q + m, n + q + m);
  H.block(0, 0, n, n) = t.E + t.E.transpose() - bd.P;
  H.block(0, n, n, q) = -t.beta * t.C2.transpose();
  H.block(n, 0, q, n) = -t.beta * t.C2;
  H.block(n, n, q, q) = 2.0 * t.lambda.asDiagonal();
  H.block(n, n + q, q, m) = -t.beta * t.D22;
  H.block(n + q, n, m, q) = -t.beta * t.D22.transpose();
  H.block(n + q, n + q, m, m) = g * MatrixXd::Identity(m, m);
  MatrixXd K(n, n + q + m);
  K << t.F, t.B1, t.B2;
  MatrixXd L(t.p(), n + q + m);
  L << t.C1, t.D11, t.D12;
  return is_pd(H - K.transpose() * bd.P.inverse() * K - L.transpose() * L / g);
}

/// Random bundle whose blocks are scaled by `scale`; large scales are infeasible.
inline rrnn::CertifiedBundle random_bundle(std::mt19937_64& rng, rrnn::ConstraintKind kind,
                                           double scale, Eigen::Index n = 4, Eigen::Index q = 3,
                                           Eigen::Index m = 2, Eigen::Index p = 2) {
  rrnn::CertifiedBundle b;
  b.kind = kind;
  b.gamma = kind == rrnn::ConstraintKind::RobustGamma ? 2.0 : 0.0;
  auto& t = b.theta;
  t = rrnn::ImplicitParams::zeros(n, q, m, p);
  const MatrixXd G = randn(rng, n, n, 0.1);
  t.E = MatrixXd::Identity(n, n) + G;
  const MatrixXd R = randn(rng, n, n, 0.2);
  b.P = MatrixXd::Identity(n, n) + R * R.transpose();
  t.F = randn(rng, n, n, scale);
  t.B1 = randn(rng, n, q, scale);
  t.B2 = randn(rng, n, m, scale);
  t.C1 = randn(rng, p, n, scale);
  t.D11 = randn(rng, p, q, scale);
  t.D12 = randn(rng, p, m, scale);
  t.C2 = randn(rng, q, n, scale);
  t.D22 = randn(rng, q, m, scale);
  t.lambda = (randn(rng, q, 1).array().abs() + 0.5).matrix();
  return b;
}

/// Random Schur-stable A with spectral radius exactly `rho`.
inline MatrixXd random_stable(std::mt19937_64& rng, Eigen::Index n, double rho) {
  MatrixXd A = randn(rng, n, n);
  const double r = A.eigenvalues().cwiseAbs().maxCoeff();
  return A * (rho / r);
}

/// LTI simulation x+ = A x + B u, y = C x + D u from x = 0.
inline MatrixXd lti_response(const MatrixXd& A, const MatrixXd& B, const MatrixXd& C,
                             const MatrixXd& D, const MatrixXd& u) {
  VectorXd x = VectorXd::Zero(A.rows());
  MatrixXd y(u.rows(), C.rows());
  for (Eigen::Index t = 0; t < u.rows(); ++t) {
    const VectorXd ut = u.row(t).transpose();
    y.row(t) = (C * x + D * ut).transpose();
    x = A * x + B * ut;
  }
  return y;
}

/// ci-RNN recursion E z+ = phi(F z + B u + b) solved directly.
inline MatrixXd cirnn_response(const rrnn::CiRnn& c, const MatrixXd& u) {
  VectorXd z = VectorXd::Zero(c.n());
  MatrixXd y(u.rows(), c.C.rows());
  const Eigen::ColPivHouseholderQR<MatrixXd> qr(c.E);
  for (Eigen::Index t = 0; t < u.rows(); ++t) {
    const VectorXd ut = u.row(t).transpose();
    y.row(t) = (c.C * z + c.D * ut).transpose();
    z = qr.solve(rrnn::activation_apply(c.activation, c.F * z + c.B * ut + c.b));
  }
  return y;
}

/// Random ci-RNN satisfying the contraction LMI with a random diagonal certificate.
inline std::pair<rrnn::CiRnn, VectorXd> random_cirnn(std::mt19937_64& rng, Eigen::Index n,
                                                      rrnn::Activation act) {
  rrnn::CiRnn c;
  c.E = MatrixXd::Identity(n, n) + randn(rng, n, n, 0.2 / std::sqrt(double(n)));
  c.F = randn(rng, n, n, 1.0 / std::sqrt(double(n)));
  c.B = randn(rng, n, 1);
  c.b = randn(rng, n, 1, 0.1);
  c.C = randn(rng, 1, n);
  c.D = randn(rng, 1, 1);
  c.activation = act;
  std::uniform_real_distribution<double> ud(0.5, 1.5);
  VectorXd p(n);
  for (Eigen::Index i = 0; i < n; ++i) p(i) = ud(rng);
  // the F-independent block E + E' - P must be PD before shrinking F can help
  while (!is_pd(c.E + c.E.transpose() - MatrixXd(p.asDiagonal()) - 0.05 * MatrixXd::Identity(n, n))) {
    c.E = MatrixXd::Identity(n, n) + randn(rng, n, n, 0.2 / std::sqrt(double(n)));
    for (Eigen::Index i = 0; i < n; ++i) p(i) = ud(rng);
  }
  for (int k = 0; k < 200 && !rrnn::pd_margin(rrnn::contraction_lmi(c, p)); ++k) c.F *= 0.8;
  return {c, p};
}

/// Central difference of f at x along coordinate i.
inline double central_difference(const std::function<double(const VectorXd&)>& f,
                                 const VectorXd& x, Eigen::Index i, double h) {
  VectorXd xp = x, xm = x;
  xp(i) += h;
  xm(i) -= h;
  return (f(xp) - f(xm)) / (2.0 * h);
}

inline double relative_error(double a, double b) {
  const double d = std::max(std::abs(a), std::abs(b));
  return d == 0.0 ? 0.0 : std::abs(a - b) / d;
}

}  // namespace oracle
