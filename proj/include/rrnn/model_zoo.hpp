#pragma once

// Trainable model kinds behind one interface. Every kind provides the free
// functions pack / unpack / objective / feasibility / predict / input_vjp,
// which the training loop and the evaluation tools are written against.

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include <Eigen/Dense>

#include "rrnn/certificates.hpp"
#include "rrnn/lstm.hpp"
#include "rrnn/models.hpp"
#include "rrnn/numerics.hpp"

namespace rrnn {

enum class ModelKind { rnn, lstm, srnn, cirnn, robust_star, robust_gamma };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::rnn: return "rnn";
    case ModelKind::lstm: return "lstm";
    case ModelKind::srnn: return "srnn";
    case ModelKind::cirnn: return "cirnn";
    case ModelKind::robust_star: return "robust-star";
    case ModelKind::robust_gamma: return "robust-gamma";
  }
  return "?";
}

inline ModelKind model_kind_from_string(std::string_view s) {
  if (s == "rnn") return ModelKind::rnn;
  if (s == "lstm") return ModelKind::lstm;
  if (s == "srnn") return ModelKind::srnn;
  if (s == "cirnn") return ModelKind::cirnn;
  if (s == "robust-star") return ModelKind::robust_star;
  if (s == "robust-gamma") return ModelKind::robust_gamma;
  throw std::invalid_argument("unknown model kind '" + std::string(s) +
                              "' (expected rnn, lstm, srnn, cirnn, robust-star, robust-gamma)");
}

class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// ci-RNN (or s-RNN when identity_e is set) with its diagonal contraction
/// certificate. E stays at I and is excluded from the parameter vector for
/// the s-RNN.
struct ContractingRnn {
  CiRnn net;
  VectorXd p;
  bool identity_e = false;
};

using SequenceModel = std::variant<CertifiedBundle, Elman, ContractingRnn, Lstm>;

inline ModelKind kind_of(const CertifiedBundle& b) {
  switch (b.kind) {
    case ConstraintKind::RobustStar: return ModelKind::robust_star;
    case ConstraintKind::RobustGamma: return ModelKind::robust_gamma;
    case ConstraintKind::CiRnnContraction: return ModelKind::cirnn;
  }
  return ModelKind::robust_star;
}
inline ModelKind kind_of(const Elman&) { return ModelKind::rnn; }
inline ModelKind kind_of(const ContractingRnn& c) {
  return c.identity_e ? ModelKind::srnn : ModelKind::cirnn;
}
inline ModelKind kind_of(const Lstm&) { return ModelKind::lstm; }
inline ModelKind kind_of(const SequenceModel& m) {
  return std::visit([](const auto& x) { return kind_of(x); }, m);
}

// ---------------------------------------------------------------------------
// Flat parameter vectors (column-major per block, fixed block order)

namespace detail {

class Packer {
 public:
  void put(const MatrixXd& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) data_.push_back(m(i, j));
  }
  void put(const VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) data_.push_back(v(i));
  }
  VectorXd finish() const {
    return Eigen::Map<const VectorXd>(data_.data(), static_cast<Eigen::Index>(data_.size()));
  }

 private:
  std::vector<double> data_;
};

class Unpacker {
 public:
  explicit Unpacker(const VectorXd& v) : v_(v) {}
  void get(MatrixXd& m) {
    need(m.size());
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = v_(pos_++);
  }
  void get(VectorXd& x) {
    need(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = v_(pos_++);
  }
  void done() const {
    if (pos_ != v_.size()) throw DimensionError("unpack: parameter vector has trailing entries");
  }

 private:
  void need(Eigen::Index k) const {
    if (pos_ + k > v_.size()) throw DimensionError("unpack: parameter vector too short");
  }
  const VectorXd& v_;
  Eigen::Index pos_ = 0;
};

template <class Theta, class Mat, class Visitor>
void visit_theta(Theta& t, Mat& P, Visitor&& f) {
  f(t.E); f(t.F); f(t.B1); f(t.B2); f(t.C1); f(t.D11); f(t.D12);
  f(t.lambda); f(t.C2); f(t.b); f(t.D22); f(P);
}

inline double squared_error(const MatrixXd& y, const MatrixXd& target, MatrixXd* dy) {
  const MatrixXd r = y - target;
  if (dy) *dy = 2.0 * r;
  return r.squaredNorm();
}

inline void check_batch(const SeqBatch& batch) {
  if (batch.u.rows() != batch.y.rows()) {
    throw DimensionError("batch: u and y have different lengths");
  }
}

/// Returns -alpha * logdet(M) and, when requested, adds its adjoint to grad.
inline double logdet_barrier(const CertifiedBundle& bundle, double alpha, BundleGradient* grad) {
  const SymMatrix M = assemble_lmi(bundle);
  const PdReport rep = cholesky_logdet(M);
  if (!rep.is_pd) {
    throw InfeasibleError("barrier: LMI is not positive definite (pivot " +
                          std::to_string(rep.failed_pivot) + ")");
  }
  if (grad && alpha != 0.0) {
    const MatrixXd Minv = inverse_pd(M);
    lmi_adjoint(bundle, -alpha * Minv, *grad);
  }
  return -alpha * rep.logdet;
}

}  // namespace detail

// --- CertifiedBundle (Theta_* and Theta_gamma) -------------------------------

inline VectorXd pack(const CertifiedBundle& b) {
  detail::Packer pk;
  detail::visit_theta(b.theta, b.P, [&](const auto& x) { pk.put(x); });
  return pk.finish();
}

inline void unpack(CertifiedBundle& b, const VectorXd& v) {
  detail::Unpacker up(v);
  detail::visit_theta(b.theta, b.P, [&](auto& x) { up.get(x); });
  up.done();
}

inline FeasibilityReport feasibility(const CertifiedBundle& b) { return feasibility_margin(b); }
inline bool is_constrained(const CertifiedBundle&) { return true; }

/// Squared simulation error plus the log-det and log-multiplier barriers.
/// When grad is non-null it receives the exact gradient in pack() order.
inline double objective(const CertifiedBundle& bundle, const SeqBatch& batch, double alpha,
                        VectorXd* grad) {
  detail::check_batch(batch);
  const ImplicitParams& th = bundle.theta;
  if ((th.lambda.array() <= 0.0).any()) {
    throw InfeasibleError("barrier: Lambda has a nonpositive entry");
  }
  BundleGradient g = zero_gradient(bundle);
  double barrier = detail::logdet_barrier(bundle, alpha, grad ? &g : nullptr);
  if (bundle.kind != ConstraintKind::CiRnnContraction) {
    barrier -= alpha * th.lambda.array().log().sum();
    if (grad) g.theta.lambda.array() -= alpha / th.lambda.array();
  }

  const ExplicitModel ex = to_explicit(th);
  const ExplicitTrace tr = simulate_trace(ex, batch.u, VectorXd::Zero(ex.n()));
  MatrixXd dy;
  const double loss = detail::squared_error(tr.y, batch.y, grad ? &dy : nullptr);
  if (!std::isfinite(loss)) throw SimulationError(batch.u.rows(), "objective: non-finite loss");

  if (grad) {
    const ExplicitAdjoint adj = backprop(ex, tr, batch.u, dy);
    const ExplicitModel& ge = adj.grad;
    const MatrixXd Et = th.E.transpose();
    const Eigen::PartialPivLU<MatrixXd> lut(Et);
    const MatrixXd gF = lut.solve(ge.Fbar);
    const MatrixXd gB1 = lut.solve(ge.B1bar);
    const MatrixXd gB2 = lut.solve(ge.B2bar);
    g.theta.F += gF;
    g.theta.B1 += gB1;
    g.theta.B2 += gB2;
    g.theta.E -= gF * ex.Fbar.transpose() + gB1 * ex.B1bar.transpose() +
                 gB2 * ex.B2bar.transpose();
    g.theta.C1 += ge.C1;
    g.theta.D11 += ge.D11;
    g.theta.D12 += ge.D12;
    const VectorXd inv_l = th.lambda.cwiseInverse();
    g.theta.C2 += inv_l.asDiagonal() * ge.C2bar;
    g.theta.b += ge.bbar.cwiseProduct(inv_l);
    g.theta.D22 += inv_l.asDiagonal() * ge.D22bar;
    const VectorXd dl = (ge.C2bar.cwiseProduct(ex.C2bar)).rowwise().sum() +
                        ge.bbar.cwiseProduct(ex.bbar) +
                        (ge.D22bar.cwiseProduct(ex.D22bar)).rowwise().sum();
    g.theta.lambda -= dl.cwiseProduct(inv_l);

    detail::Packer pk;
    detail::visit_theta(g.theta, g.P, [&](auto& x) { pk.put(x); });
    *grad = pk.finish();
  }
  return loss + barrier;
}

inline MatrixXd predict(const CertifiedBundle& b, const MatrixXd& u) {
  return simulate(to_explicit(b.theta), u).y;
}

inline MatrixXd input_vjp(const CertifiedBundle& b, const MatrixXd& u, const MatrixXd& dy) {
  const ExplicitModel ex = to_explicit(b.theta);
  return backprop(ex, simulate_trace(ex, u, VectorXd::Zero(ex.n())), u, dy).du;
}

// --- Elman -------------------------------------------------------------------

inline VectorXd pack(const Elman& e) {
  detail::Packer pk;
  pk.put(e.A); pk.put(e.B); pk.put(e.b); pk.put(e.C); pk.put(e.D);
  return pk.finish();
}

inline void unpack(Elman& e, const VectorXd& v) {
  detail::Unpacker up(v);
  up.get(e.A); up.get(e.B); up.get(e.b); up.get(e.C); up.get(e.D);
  up.done();
}

inline FeasibilityReport feasibility(const Elman&) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return {inf, inf, inf, true};
}
inline bool is_constrained(const Elman&) { return false; }

inline double objective(const Elman& e, const SeqBatch& batch, double /*alpha*/,
                        VectorXd* grad) {
  detail::check_batch(batch);
  const ExplicitModel ex = e.to_explicit();
  const ExplicitTrace tr = simulate_trace(ex, batch.u, VectorXd::Zero(ex.n()));
  MatrixXd dy;
  const double loss = detail::squared_error(tr.y, batch.y, grad ? &dy : nullptr);
  if (grad) {
    const ExplicitAdjoint adj = backprop(ex, tr, batch.u, dy);
    detail::Packer pk;
    pk.put(adj.grad.C2bar); pk.put(adj.grad.D22bar); pk.put(adj.grad.bbar);
    pk.put(adj.grad.C1); pk.put(adj.grad.D12);
    *grad = pk.finish();
  }
  return loss;
}

inline MatrixXd predict(const Elman& e, const MatrixXd& u) {
  return simulate(e.to_explicit(), u).y;
}

inline MatrixXd input_vjp(const Elman& e, const MatrixXd& u, const MatrixXd& dy) {
  const ExplicitModel ex = e.to_explicit();
  return backprop(ex, simulate_trace(ex, u, VectorXd::Zero(ex.n())), u, dy).du;
}

// --- ci-RNN / s-RNN ------------------------------------------------------------

inline VectorXd pack(const ContractingRnn& c) {
  detail::Packer pk;
  if (!c.identity_e) pk.put(c.net.E);
  pk.put(c.net.F); pk.put(c.net.B); pk.put(c.net.b); pk.put(c.net.C); pk.put(c.net.D);
  pk.put(c.p);
  return pk.finish();
}

inline void unpack(ContractingRnn& c, const VectorXd& v) {
  detail::Unpacker up(v);
  if (!c.identity_e) up.get(c.net.E);
  up.get(c.net.F); up.get(c.net.B); up.get(c.net.b); up.get(c.net.C); up.get(c.net.D);
  up.get(c.p);
  up.done();
}

inline FeasibilityReport feasibility(const ContractingRnn& c) {
  return feasibility_margin(contraction_bundle(c.net, c.p));
}
inline bool is_constrained(const ContractingRnn&) { return true; }

inline double objective(const ContractingRnn& c, const SeqBatch& batch, double alpha,
                        VectorXd* grad) {
  detail::check_batch(batch);
  const CertifiedBundle cb = contraction_bundle(c.net, c.p);
  BundleGradient g = zero_gradient(cb);
  const double barrier = detail::logdet_barrier(cb, alpha, grad ? &g : nullptr);

  const ExplicitModel ex = c.net.to_explicit();
  const ExplicitTrace tr = simulate_trace(ex, batch.u, VectorXd::Zero(ex.n()));
  MatrixXd dy;
  const double loss = detail::squared_error(tr.y, batch.y, grad ? &dy : nullptr);
  if (grad) {
    const ExplicitAdjoint adj = backprop(ex, tr, batch.u, dy);
    // B1bar = E^{-1}:  dL/dE = -E^{-T} G E^{-T}
    const MatrixXd& Einv = ex.B1bar;
    const MatrixXd gE = -Einv.transpose() * adj.grad.B1bar * Einv.transpose() + g.theta.E;
    detail::Packer pk;
    if (!c.identity_e) pk.put(gE);
    pk.put(MatrixXd(adj.grad.C2bar + g.theta.C2));
    pk.put(adj.grad.D22bar);
    pk.put(adj.grad.bbar);
    pk.put(adj.grad.C1);
    pk.put(adj.grad.D12);
    pk.put(VectorXd(g.P.diagonal()));
    *grad = pk.finish();
  }
  return loss + barrier;
}

inline MatrixXd predict(const ContractingRnn& c, const MatrixXd& u) {
  return simulate(c.net.to_explicit(), u).y;
}

inline MatrixXd input_vjp(const ContractingRnn& c, const MatrixXd& u, const MatrixXd& dy) {
  const ExplicitModel ex = c.net.to_explicit();
  return backprop(ex, simulate_trace(ex, u, VectorXd::Zero(ex.n())), u, dy).du;
}

// --- LSTM ----------------------------------------------------------------------

inline VectorXd pack(const Lstm& l) {
  detail::Packer pk;
  pk.put(l.Wx); pk.put(l.Wu); pk.put(l.bias); pk.put(l.C);
  return pk.finish();
}

inline void unpack(Lstm& l, const VectorXd& v) {
  detail::Unpacker up(v);
  up.get(l.Wx); up.get(l.Wu); up.get(l.bias); up.get(l.C);
  up.done();
}

inline FeasibilityReport feasibility(const Lstm&) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return {inf, inf, inf, true};
}
inline bool is_constrained(const Lstm&) { return false; }

inline double objective(const Lstm& l, const SeqBatch& batch, double /*alpha*/,
                        VectorXd* grad) {
  detail::check_batch(batch);
  const LstmTrace tr = simulate_trace(l, batch.u, VectorXd::Zero(2 * l.n()));
  MatrixXd dy;
  const double loss = detail::squared_error(tr.y, batch.y, grad ? &dy : nullptr);
  if (grad) {
    const LstmAdjoint adj = backprop(l, tr, batch.u, dy);
    *grad = pack(adj.grad);
  }
  return loss;
}

inline MatrixXd predict(const Lstm& l, const MatrixXd& u) { return simulate(l, u).y; }

inline MatrixXd input_vjp(const Lstm& l, const MatrixXd& u, const MatrixXd& dy) {
  return backprop(l, simulate_trace(l, u, VectorXd::Zero(2 * l.n())), u, dy).du;
}

// --- variant dispatch ------------------------------------------------------------

inline MatrixXd predict(const SequenceModel& m, const MatrixXd& u) {
  return std::visit([&](const auto& x) { return predict(x, u); }, m);
}
inline MatrixXd input_vjp(const SequenceModel& m, const MatrixXd& u, const MatrixXd& dy) {
  return std::visit([&](const auto& x) { return input_vjp(x, u, dy); }, m);
}
inline FeasibilityReport feasibility(const SequenceModel& m) {
  return std::visit([](const auto& x) { return feasibility(x); }, m);
}

/// Squared simulation error ||y~ - S(u~)||^2 from zero initial state.
template <class Model>
double sim_loss(const Model& model, const SeqBatch& batch) {
  detail::check_batch(batch);
  const MatrixXd y = predict(model, batch.u);
  const double l = (batch.y - y).squaredNorm();
  if (!std::isfinite(l)) throw SimulationError(batch.u.rows(), "sim_loss: non-finite loss");
  return l;
}

// ---------------------------------------------------------------------------
// Initialization

struct ModelDims {
  Eigen::Index n = 10, q = 10, m = 1, p = 1;
};

namespace detail {
inline MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double sd) {
  std::normal_distribution<double> nd(0.0, sd);
  MatrixXd out(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) out(i, j) = nd(rng);
  return out;
}
}  // namespace detail

/// Strictly feasible starting point for Theta_* (gamma empty) or Theta_gamma.
/// E = P = I and Lambda = I; remaining blocks are Gaussian with standard
/// deviation 1/sqrt(n), and the blocks inside the LMI are halved until the
/// LMI holds with margin kStrictEps.
inline CertifiedBundle init_robust(const ModelDims& d, std::optional<double> gamma,
                                   std::uint64_t seed, Activation act = Activation::relu,
                                   int max_halvings = 200) {
  if (d.n < 1 || d.q < 1 || d.m < 1 || d.p < 1) {
    throw std::invalid_argument("init_robust: dimensions must be >= 1");
  }
  if (gamma && !(*gamma > 0.0)) throw std::invalid_argument("init_robust: gamma must be > 0");
  std::mt19937_64 rng(seed);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d.n));
  CertifiedBundle b;
  b.theta = ImplicitParams::zeros(d.n, d.q, d.m, d.p, act);
  auto& t = b.theta;
  t.F = detail::gaussian(rng, d.n, d.n, sd);
  t.B1 = detail::gaussian(rng, d.n, d.q, sd);
  t.B2 = detail::gaussian(rng, d.n, d.m, sd);
  t.C2 = detail::gaussian(rng, d.q, d.n, sd);
  t.D22 = detail::gaussian(rng, d.q, d.m, sd);
  t.C1 = detail::gaussian(rng, d.p, d.n, sd);
  t.D11 = detail::gaussian(rng, d.p, d.q, sd);
  t.D12 = detail::gaussian(rng, d.p, d.m, sd);
  b.P = MatrixXd::Identity(d.n, d.n);
  b.kind = gamma ? ConstraintKind::RobustGamma : ConstraintKind::RobustStar;
  b.gamma = gamma.value_or(0.0);
  for (int k = 0; k <= max_halvings; ++k) {
    if (feasibility_margin(b).feasible) return b;
    t.F *= 0.5;
    t.B1 *= 0.5;
    t.C2 *= 0.5;
    if (gamma) {
      t.B2 *= 0.5;
      t.C1 *= 0.5;
      t.D11 *= 0.5;
      t.D12 *= 0.5;
      t.D22 *= 0.5;
    }
  }
  throw InfeasibleError("init_robust: no strictly feasible point after halving");
}

inline Elman init_elman(const ModelDims& d, std::uint64_t seed,
                        Activation act = Activation::relu) {
  std::mt19937_64 rng(seed);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d.n));
  Elman e;
  e.A = detail::gaussian(rng, d.n, d.n, sd);
  e.B = detail::gaussian(rng, d.n, d.m, sd);
  e.b = VectorXd::Zero(d.n);
  e.C = detail::gaussian(rng, d.p, d.n, sd);
  e.D = detail::gaussian(rng, d.p, d.m, sd);
  e.activation = act;
  return e;
}

/// ci-RNN (or s-RNN) with E = I, certificate p = 1, and F halved until the
/// contraction LMI holds with margin kStrictEps.
inline ContractingRnn init_contracting(const ModelDims& d, bool identity_e, std::uint64_t seed,
                                       Activation act = Activation::relu,
                                       int max_halvings = 200) {
  std::mt19937_64 rng(seed);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d.n));
  ContractingRnn c;
  c.identity_e = identity_e;
  c.net.E = MatrixXd::Identity(d.n, d.n);
  c.net.F = detail::gaussian(rng, d.n, d.n, sd);
  c.net.B = detail::gaussian(rng, d.n, d.m, sd);
  c.net.b = VectorXd::Zero(d.n);
  c.net.C = detail::gaussian(rng, d.p, d.n, sd);
  c.net.D = detail::gaussian(rng, d.p, d.m, sd);
  c.net.activation = act;
  c.p = VectorXd::Ones(d.n);
  for (int k = 0; k <= max_halvings; ++k) {
    if (feasibility(c).feasible) return c;
    c.net.F *= 0.5;
  }
  throw InfeasibleError("init_contracting: no strictly feasible point after halving");
}

/// Seeded starting point for any model kind. gamma is required for
/// robust-gamma and ignored otherwise.
inline SequenceModel init_feasible(ModelKind kind, const ModelDims& d,
                                   std::optional<double> gamma, std::uint64_t seed) {
  switch (kind) {
    case ModelKind::robust_star: return init_robust(d, std::nullopt, seed);
    case ModelKind::robust_gamma:
      if (!gamma) throw std::invalid_argument("init_feasible: robust-gamma requires gamma");
      return init_robust(d, gamma, seed);
    case ModelKind::rnn: return init_elman(d, seed);
    case ModelKind::cirnn: return init_contracting(d, false, seed);
    case ModelKind::srnn: return init_contracting(d, true, seed);
    case ModelKind::lstm: return Lstm::random(d.n, d.m, d.p, seed);
  }
  throw std::logic_error("init_feasible: unknown kind");
}

}  // namespace rrnn
