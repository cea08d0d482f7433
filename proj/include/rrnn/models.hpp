#pragma once

// Implicit Robust RNN parameters, their explicit simulable form, and the
// Elman / ci-RNN baselines. All of these share the explicit feedback form
//
//   v_t     = C2bar x_t + bbar + D22bar u_t
//   w_t     = phi(v_t)
//   x_{t+1} = Fbar x_t + B1bar w_t + B2bar u_t
//   y_t     = C1 x_t + D11 w_t + D12 u_t
//
// so a single forward pass and a single adjoint pass serve all of them.

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "rrnn/activation.hpp"
#include "rrnn/numerics.hpp"

namespace rrnn {

/// Paired input/output sequences. Rows are time steps.
struct SeqBatch {
  MatrixXd u;  // T x m
  MatrixXd y;  // T x p
  double dt = 0.2;
  std::uint64_t seed = 0;
  double sigma_u = 0.0;
  double tau = 0.0;

  Eigen::Index length() const { return u.rows(); }
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(Eigen::Index step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  Eigen::Index step() const { return step_; }

 private:
  Eigen::Index step_;
};

namespace detail {
inline void expect_shape(const MatrixXd& m, Eigen::Index r, Eigen::Index c, const char* name) {
  if (m.rows() != r || m.cols() != c) {
    throw DimensionError(std::string(name) + " is " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + ", expected " + std::to_string(r) + "x" +
                         std::to_string(c));
  }
}
inline void expect_size(const VectorXd& v, Eigen::Index r, const char* name) {
  if (v.size() != r) {
    throw DimensionError(std::string(name) + " has length " + std::to_string(v.size()) +
                         ", expected " + std::to_string(r));
  }
}
}  // namespace detail

/// theta = (E, F, B1, B2, C1, D11, D12, Lambda, C2, b, D22) of the implicit model
///   E x_{t+1}    = F x_t + B1 w_t + B2 u_t
///   y_t          = C1 x_t + D11 w_t + D12 u_t
///   Lambda v_t   = C2 x_t + b + D22 u_t
struct ImplicitParams {
  MatrixXd E, F, B1, B2;
  MatrixXd C1, D11, D12;
  VectorXd lambda;  // diagonal of Lambda
  MatrixXd C2;
  VectorXd b;
  MatrixXd D22;
  double beta = 1.0;
  Activation activation = Activation::relu;

  Eigen::Index n() const { return E.rows(); }
  Eigen::Index q() const { return lambda.size(); }
  Eigen::Index m() const { return B2.cols(); }
  Eigen::Index p() const { return C1.rows(); }

  static ImplicitParams zeros(Eigen::Index n, Eigen::Index q, Eigen::Index m, Eigen::Index p,
                              Activation act = Activation::relu) {
    ImplicitParams t;
    t.E = MatrixXd::Identity(n, n);
    t.F = MatrixXd::Zero(n, n);
    t.B1 = MatrixXd::Zero(n, q);
    t.B2 = MatrixXd::Zero(n, m);
    t.C1 = MatrixXd::Zero(p, n);
    t.D11 = MatrixXd::Zero(p, q);
    t.D12 = MatrixXd::Zero(p, m);
    t.lambda = VectorXd::Ones(q);
    t.C2 = MatrixXd::Zero(q, n);
    t.b = VectorXd::Zero(q);
    t.D22 = MatrixXd::Zero(q, m);
    t.activation = act;
    t.beta = slope_bound(act);
    return t;
  }

  void validate() const {
    const auto nn = n(), qq = q(), mm = m(), pp = p();
    using detail::expect_shape;
    expect_shape(E, nn, nn, "E");
    expect_shape(F, nn, nn, "F");
    expect_shape(B1, nn, qq, "B1");
    expect_shape(B2, nn, mm, "B2");
    expect_shape(C1, pp, nn, "C1");
    expect_shape(D11, pp, qq, "D11");
    expect_shape(D12, pp, mm, "D12");
    expect_shape(C2, qq, nn, "C2");
    detail::expect_size(b, qq, "b");
    expect_shape(D22, qq, mm, "D22");
    if (!(beta > 0.0)) throw DimensionError("beta must be positive");
  }
};

struct ExplicitModel {
  MatrixXd Fbar, B1bar, B2bar;
  MatrixXd C1, D11, D12;
  MatrixXd C2bar;
  VectorXd bbar;
  MatrixXd D22bar;
  Activation activation = Activation::relu;

  Eigen::Index n() const { return Fbar.rows(); }
  Eigen::Index q() const { return C2bar.rows(); }
  Eigen::Index m() const { return B2bar.cols(); }
  Eigen::Index p() const { return C1.rows(); }

  /// Zero-valued container with the same shapes; used for gradients.
  ExplicitModel zeros_like() const {
    ExplicitModel g;
    g.Fbar = MatrixXd::Zero(Fbar.rows(), Fbar.cols());
    g.B1bar = MatrixXd::Zero(B1bar.rows(), B1bar.cols());
    g.B2bar = MatrixXd::Zero(B2bar.rows(), B2bar.cols());
    g.C1 = MatrixXd::Zero(C1.rows(), C1.cols());
    g.D11 = MatrixXd::Zero(D11.rows(), D11.cols());
    g.D12 = MatrixXd::Zero(D12.rows(), D12.cols());
    g.C2bar = MatrixXd::Zero(C2bar.rows(), C2bar.cols());
    g.bbar = VectorXd::Zero(bbar.size());
    g.D22bar = MatrixXd::Zero(D22bar.rows(), D22bar.cols());
    g.activation = activation;
    return g;
  }
};

/// Inverts E and Lambda. Throws when E is singular or Lambda has a
/// nonpositive entry; under a valid certificate neither can happen.
inline ExplicitModel to_explicit(const ImplicitParams& theta) {
  theta.validate();
  if ((theta.lambda.array() <= 0.0).any()) {
    throw std::domain_error("to_explicit: Lambda must have positive entries");
  }
  Eigen::FullPivLU<MatrixXd> lu(theta.E);
  if (!lu.isInvertible()) throw std::domain_error("to_explicit: E is singular");
  ExplicitModel m;
  m.Fbar = lu.solve(theta.F);
  m.B1bar = lu.solve(theta.B1);
  m.B2bar = lu.solve(theta.B2);
  m.C1 = theta.C1;
  m.D11 = theta.D11;
  m.D12 = theta.D12;
  const VectorXd inv_lambda = theta.lambda.cwiseInverse();
  m.C2bar = inv_lambda.asDiagonal() * theta.C2;
  m.bbar = theta.b.cwiseProduct(inv_lambda);
  m.D22bar = inv_lambda.asDiagonal() * theta.D22;
  m.activation = theta.activation;
  return m;
}

/// Forward trajectory retained for the adjoint pass.
struct ExplicitTrace {
  MatrixXd x;  // (T+1) x n
  MatrixXd v;  // T x q
  MatrixXd w;  // T x q
  MatrixXd y;  // T x p
};

inline ExplicitTrace simulate_trace(const ExplicitModel& model, const MatrixXd& u,
                                    const VectorXd& x0) {
  const Eigen::Index T = u.rows(), n = model.n(), q = model.q(), p = model.p();
  if (u.cols() != model.m()) {
    throw DimensionError("simulate: input has " + std::to_string(u.cols()) +
                         " channels, model expects " + std::to_string(model.m()));
  }
  detail::expect_size(x0, n, "x0");
  ExplicitTrace tr;
  tr.x.resize(T + 1, n);
  tr.v.resize(T, q);
  tr.w.resize(T, q);
  tr.y.resize(T, p);
  VectorXd x = x0;
  tr.x.row(0) = x.transpose();
  for (Eigen::Index t = 0; t < T; ++t) {
    const VectorXd ut = u.row(t).transpose();
    const VectorXd v = model.C2bar * x + model.bbar + model.D22bar * ut;
    const VectorXd w = activation_apply(model.activation, v);
    tr.y.row(t) = (model.C1 * x + model.D11 * w + model.D12 * ut).transpose();
    x = model.Fbar * x + model.B1bar * w + model.B2bar * ut;
    if (!x.allFinite()) {
      throw SimulationError(t, "simulate: non-finite state at step " + std::to_string(t));
    }
    tr.v.row(t) = v.transpose();
    tr.w.row(t) = w.transpose();
    tr.x.row(t + 1) = x.transpose();
  }
  return tr;
}

struct SimResult {
  MatrixXd y;  // T x p
  MatrixXd x;  // (T+1) x n
};

inline SimResult simulate(const ExplicitModel& model, const MatrixXd& u, const VectorXd& x0) {
  ExplicitTrace tr = simulate_trace(model, u, x0);
  return {std::move(tr.y), std::move(tr.x)};
}

inline SimResult simulate(const ExplicitModel& model, const MatrixXd& u) {
  return simulate(model, u, VectorXd::Zero(model.n()));
}

struct ExplicitAdjoint {
  ExplicitModel grad;  // d loss / d (explicit blocks)
  MatrixXd du;         // T x m
  VectorXd dx0;
};

/// Back-propagation through time. dy holds d loss / d y_t row-wise.
inline ExplicitAdjoint backprop(const ExplicitModel& model, const ExplicitTrace& tr,
                                const MatrixXd& u, const MatrixXd& dy) {
  const Eigen::Index T = u.rows();
  ExplicitAdjoint adj;
  adj.grad = model.zeros_like();
  adj.du.resize(T, model.m());
  ExplicitModel& g = adj.grad;
  VectorXd gx_next = VectorXd::Zero(model.n());
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const VectorXd xt = tr.x.row(t).transpose();
    const VectorXd vt = tr.v.row(t).transpose();
    const VectorXd wt = tr.w.row(t).transpose();
    const VectorXd ut = u.row(t).transpose();
    const VectorXd gy = dy.row(t).transpose();

    const VectorXd gw = model.D11.transpose() * gy + model.B1bar.transpose() * gx_next;
    const VectorXd gv = activation_derivative(model.activation, vt).cwiseProduct(gw);

    g.C1.noalias() += gy * xt.transpose();
    g.D11.noalias() += gy * wt.transpose();
    g.D12.noalias() += gy * ut.transpose();
    g.Fbar.noalias() += gx_next * xt.transpose();
    g.B1bar.noalias() += gx_next * wt.transpose();
    g.B2bar.noalias() += gx_next * ut.transpose();
    g.C2bar.noalias() += gv * xt.transpose();
    g.bbar += gv;
    g.D22bar.noalias() += gv * ut.transpose();

    adj.du.row(t) = (model.D12.transpose() * gy + model.B2bar.transpose() * gx_next +
                     model.D22bar.transpose() * gv)
                        .transpose();
    gx_next = model.C1.transpose() * gy + model.Fbar.transpose() * gx_next +
              model.C2bar.transpose() * gv;
  }
  adj.dx0 = gx_next;
  return adj;
}

// ---------------------------------------------------------------------------
// Baselines

/// x_{t+1} = phi(A x_t + B u_t + b),  y_t = C x_t + D u_t
struct Elman {
  MatrixXd A, B;
  VectorXd b;
  MatrixXd C, D;
  Activation activation = Activation::relu;

  Eigen::Index n() const { return A.rows(); }

  ExplicitModel to_explicit() const {
    const Eigen::Index n = A.rows(), m = B.cols(), p = C.rows();
    ExplicitModel e;
    e.Fbar = MatrixXd::Zero(n, n);
    e.B1bar = MatrixXd::Identity(n, n);
    e.B2bar = MatrixXd::Zero(n, m);
    e.C1 = C;
    e.D11 = MatrixXd::Zero(p, n);
    e.D12 = D;
    e.C2bar = A;
    e.bbar = b;
    e.D22bar = B;
    e.activation = activation;
    return e;
  }
};

/// Contracting implicit RNN: E z_{t+1} = phi(F z_t + B u_t + b), y_t = C z_t + D u_t.
/// The s-RNN is the special case E = I.
struct CiRnn {
  MatrixXd E, F, B;
  VectorXd b;
  MatrixXd C, D;
  Activation activation = Activation::relu;

  Eigen::Index n() const { return E.rows(); }

  ExplicitModel to_explicit() const {
    const Eigen::Index n = E.rows(), m = B.cols(), p = C.rows();
    Eigen::FullPivLU<MatrixXd> lu(E);
    if (!lu.isInvertible()) throw std::domain_error("CiRnn: E is singular");
    ExplicitModel e;
    e.Fbar = MatrixXd::Zero(n, n);
    e.B1bar = lu.inverse();
    e.B2bar = MatrixXd::Zero(n, m);
    e.C1 = C;
    e.D11 = MatrixXd::Zero(p, n);
    e.D12 = D;
    e.C2bar = F;
    e.bbar = b;
    e.D22bar = B;
    e.activation = activation;
    return e;
  }
};

}  // namespace rrnn
