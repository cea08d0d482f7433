#pragma once

// LSTM baseline. Gates are stacked row-wise in the order (i, f, g, o):
//
//   z_t = Wx h_{t-1} + Wu u_t + bias
//   i = sigmoid(z_i), f = sigmoid(z_f), g = tanh(z_g), o = sigmoid(z_o)
//   c_t = f * c_{t-1} + i * g
//   h_t = o * tanh(c_t)
//   y_t = C h_t + D u_t
//
// The state reported by simulate() is [h; c] (2n entries).

#include <random>

#include <Eigen/Dense>

#include "rrnn/models.hpp"

namespace rrnn {

struct Lstm {
  MatrixXd Wx;  // 4n x n
  MatrixXd Wu;  // 4n x m
  VectorXd bias;  // 4n
  MatrixXd C;  // p x n
  MatrixXd D;  // p x m, zero unless feedthrough is requested

  Eigen::Index n() const { return Wx.cols(); }
  Eigen::Index m() const { return Wu.cols(); }
  Eigen::Index p() const { return C.rows(); }

  void validate() const {
    const auto nn = n();
    detail::expect_shape(Wx, 4 * nn, nn, "Wx");
    detail::expect_shape(Wu, 4 * nn, m(), "Wu");
    detail::expect_size(bias, 4 * nn, "bias");
    detail::expect_shape(C, p(), nn, "C");
    detail::expect_shape(D, p(), m(), "D");
  }

  static Lstm random(Eigen::Index n, Eigen::Index m, Eigen::Index p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double s = 1.0 / std::sqrt(static_cast<double>(n));
    std::normal_distribution<double> nd(0.0, s);
    auto draw = [&](Eigen::Index r, Eigen::Index c) {
      MatrixXd out(r, c);
      for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) out(i, j) = nd(rng);
      return out;
    };
    Lstm l;
    l.Wx = draw(4 * n, n);
    l.Wu = draw(4 * n, m);
    l.bias = VectorXd::Zero(4 * n);
    l.C = draw(p, n);
    l.D = MatrixXd::Zero(p, m);
    return l;
  }
};

struct LstmTrace {
  MatrixXd h;  // (T+1) x n, row 0 is the initial hidden state
  MatrixXd c;  // (T+1) x n
  MatrixXd gates;  // T x 4n, post-activation (i, f, g, o)
  MatrixXd y;  // T x p
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline LstmTrace simulate_trace(const Lstm& net, const MatrixXd& u, const VectorXd& state0) {
  const Eigen::Index T = u.rows(), n = net.n();
  if (u.cols() != net.m()) throw DimensionError("simulate: LSTM input width mismatch");
  detail::expect_size(state0, 2 * n, "x0");
  LstmTrace tr;
  tr.h.resize(T + 1, n);
  tr.c.resize(T + 1, n);
  tr.gates.resize(T, 4 * n);
  tr.y.resize(T, net.p());
  VectorXd h = state0.head(n), c = state0.tail(n);
  tr.h.row(0) = h.transpose();
  tr.c.row(0) = c.transpose();
  for (Eigen::Index t = 0; t < T; ++t) {
    const VectorXd ut = u.row(t).transpose();
    VectorXd z = net.Wx * h + net.Wu * ut + net.bias;
    for (Eigen::Index k = 0; k < n; ++k) {
      z(k) = sigmoid(z(k));
      z(n + k) = sigmoid(z(n + k));
      z(2 * n + k) = std::tanh(z(2 * n + k));
      z(3 * n + k) = sigmoid(z(3 * n + k));
    }
    c = z.segment(n, n).cwiseProduct(c) + z.head(n).cwiseProduct(z.segment(2 * n, n));
    h = z.tail(n).cwiseProduct(c.array().tanh().matrix());
    if (!h.allFinite() || !c.allFinite()) {
      throw SimulationError(t, "simulate: non-finite LSTM state at step " + std::to_string(t));
    }
    tr.gates.row(t) = z.transpose();
    tr.h.row(t + 1) = h.transpose();
    tr.c.row(t + 1) = c.transpose();
    tr.y.row(t) = (net.C * h + net.D * ut).transpose();
  }
  return tr;
}

inline SimResult simulate(const Lstm& net, const MatrixXd& u, const VectorXd& state0) {
  LstmTrace tr = simulate_trace(net, u, state0);
  SimResult r;
  r.y = std::move(tr.y);
  r.x.resize(tr.h.rows(), 2 * net.n());
  r.x << tr.h, tr.c;
  return r;
}

inline SimResult simulate(const Lstm& net, const MatrixXd& u) {
  return simulate(net, u, VectorXd::Zero(2 * net.n()));
}

struct LstmAdjoint {
  Lstm grad;
  MatrixXd du;
};

inline LstmAdjoint backprop(const Lstm& net, const LstmTrace& tr, const MatrixXd& u,
                            const MatrixXd& dy) {
  const Eigen::Index T = u.rows(), n = net.n();
  LstmAdjoint adj;
  Lstm& g = adj.grad;
  g.Wx = MatrixXd::Zero(net.Wx.rows(), net.Wx.cols());
  g.Wu = MatrixXd::Zero(net.Wu.rows(), net.Wu.cols());
  g.bias = VectorXd::Zero(net.bias.size());
  g.C = MatrixXd::Zero(net.C.rows(), net.C.cols());
  g.D = MatrixXd::Zero(net.D.rows(), net.D.cols());
  adj.du.resize(T, net.m());

  VectorXd dh_next = VectorXd::Zero(n);  // from z_{t+1}
  VectorXd dc_next = VectorXd::Zero(n);  // d loss / d c_t carried from step t+1
  VectorXd dz(4 * n);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const VectorXd gy = dy.row(t).transpose();
    const VectorXd ut = u.row(t).transpose();
    const VectorXd h = tr.h.row(t + 1).transpose();
    const VectorXd h_prev = tr.h.row(t).transpose();
    const VectorXd c = tr.c.row(t + 1).transpose();
    const VectorXd c_prev = tr.c.row(t).transpose();
    const auto gate = tr.gates.row(t);

    g.C.noalias() += gy * h.transpose();
    g.D.noalias() += gy * ut.transpose();

    const VectorXd dh = net.C.transpose() * gy + dh_next;
    const VectorXd tc = c.array().tanh().matrix();
    VectorXd dc = dc_next;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double i = gate(k), f = gate(n + k), gg = gate(2 * n + k), o = gate(3 * n + k);
      dc(k) += dh(k) * o * (1.0 - tc(k) * tc(k));
      dz(3 * n + k) = dh(k) * tc(k) * o * (1.0 - o);
      dz(k) = dc(k) * gg * i * (1.0 - i);
      dz(2 * n + k) = dc(k) * i * (1.0 - gg * gg);
      dz(n + k) = dc(k) * c_prev(k) * f * (1.0 - f);
      dc_next(k) = dc(k) * f;
    }
    g.Wx.noalias() += dz * h_prev.transpose();
    g.Wu.noalias() += dz * ut.transpose();
    g.bias += dz;
    dh_next = net.Wx.transpose() * dz;
    adj.du.row(t) = (net.Wu.transpose() * dz + net.D.transpose() * gy).transpose();
  }
  return adj;
}

}  // namespace rrnn
