#pragma once

// Robustness and quality metrics: NSE sweeps, the gradient-ascent Lipschitz
// lower bound, and empirical checks of the incremental gain bound and of
// contraction in the storage-function metric.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rrnn/benchmark.hpp"
#include "rrnn/certificates.hpp"
#include "rrnn/metrics.hpp"
#include "rrnn/model_zoo.hpp"
#include "rrnn/parallel.hpp"
#include "rrnn/training.hpp"

namespace rrnn {

struct AttackConfig {
  int iterations = 500;
  double step_size = 0.01;
  int restarts = 5;
  double init_std = 1e-3;
  Eigen::Index horizon = 1000;
  double tau = 20.0;
  double sigma_u = 3.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (iterations < 1 || restarts < 1 || horizon < 1 || !(step_size > 0) || !(init_std > 0) ||
        !(tau > 0) || !(sigma_u > 0)) {
      throw std::invalid_argument("AttackConfig: all fields must be positive");
    }
  }
};

struct RobustnessReport {
  double gamma_hat = 0.0;
  std::optional<double> gamma_cert;
  std::vector<double> restart_ratios;
  int reinflations = 0;
};

namespace detail {
inline double ratio_or_zero(double num, double den) { return den > 0.0 ? num / den : 0.0; }
}  // namespace detail

/// Gradient ascent on log||S(u)-S(v)|| - log||u-v|| over both inputs, from
/// zero initial state. Reports the largest raw ratio seen on any iterate.
template <class Model>
RobustnessReport lipschitz_attack(const Model& model, const AttackConfig& cfg,
                                  std::optional<double> gamma_cert = std::nullopt) {
  cfg.validate();
  RobustnessReport rep;
  rep.gamma_cert = gamma_cert;
  rep.restart_ratios.assign(static_cast<std::size_t>(cfg.restarts), 0.0);
  std::vector<int> reinflated(static_cast<std::size_t>(cfg.restarts), 0);

  parallel_for(static_cast<std::size_t>(cfg.restarts), [&](std::size_t r) {
    const std::uint64_t seed = derive_seed(cfg.seed, 0x61747461u, static_cast<std::uint32_t>(r));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    MatrixXd u = gen_input({cfg.tau, cfg.sigma_u, cfg.horizon, seed});
    const Eigen::Index m = u.cols();
    auto perturbation = [&](double sd) {
      MatrixXd d(u.rows(), m);
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < u.rows(); ++i) d(i, j) = sd * nd(rng);
      return d;
    };
    MatrixXd v = u + perturbation(cfg.init_std);
    const Eigen::Index dim = u.size();
    Adam opt(2 * dim, 0.9, 0.999, 1e-8);
    double best = 0.0;
    for (int it = 0; it <= cfg.iterations; ++it) {
      const MatrixXd du_in = u - v;
      const double nu = du_in.norm();
      if (!(nu > 1e-300) || nu < 1e-12 * std::max(1.0, u.norm())) {
        v = u + perturbation(cfg.init_std);
        ++reinflated[r];
        continue;
      }
      const MatrixXd yu = predict(model, u);
      const MatrixXd yv = predict(model, v);
      const MatrixXd dy = yu - yv;
      const double ny = dy.norm();
      best = std::max(best, ny / nu);
      if (it == cfg.iterations) break;
      if (!(ny > 0.0)) {
        v = u + perturbation(std::max(cfg.init_std, 1e-3 * nu) * 10.0);
        ++reinflated[r];
        continue;
      }
      const MatrixXd gy = dy / (ny * ny);
      const MatrixXd gx = du_in / (nu * nu);
      const MatrixXd gu = input_vjp(model, u, gy) - gx;
      const MatrixXd gv = input_vjp(model, v, MatrixXd(-gy)) + gx;
      VectorXd g(2 * dim);
      g << Eigen::Map<const VectorXd>(gu.data(), dim), Eigen::Map<const VectorXd>(gv.data(), dim);
      const VectorXd step = opt.step(-g, cfg.step_size);  // ascent
      u += Eigen::Map<const MatrixXd>(step.data(), u.rows(), m);
      v += Eigen::Map<const MatrixXd>(step.data() + dim, u.rows(), m);
    }
    rep.restart_ratios[r] = best;
  });
  rep.gamma_hat = *std::max_element(rep.restart_ratios.begin(), rep.restart_ratios.end());
  for (int k : reinflated) rep.reinflations += k;
  return rep;
}

inline RobustnessReport lipschitz_attack(const SequenceModel& model, const AttackConfig& cfg,
                                         std::optional<double> gamma_cert = std::nullopt) {
  return std::visit([&](const auto& m) { return lipschitz_attack(m, cfg, gamma_cert); }, model);
}

/// Storage function weight E' P^{-1} E.
inline MatrixXd storage_weight(const CertifiedBundle& b) {
  return b.theta.E.transpose() * solve_pd(SymMatrix(b.P), b.theta.E);
}

struct GainTrialReport {
  double max_ratio = 0.0;  // max over trials and prefixes of LHS / RHS
  int trials = 0;
};

/// Checks ||ya - yb||_t^2 <= gamma^2 ||ua - ub||_t^2 + gamma * V0 on every
/// prefix t of random trajectory pairs, with V0 = dx0' E' P^{-1} E dx0.
inline GainTrialReport gain_trial(const CertifiedBundle& bundle, double gamma, int trials,
                                  Eigen::Index horizon, std::uint64_t seed) {
  const ExplicitModel ex = to_explicit(bundle.theta);
  const MatrixXd W = storage_weight(bundle);
  const Eigen::Index n = ex.n(), m = ex.m();
  GainTrialReport rep;
  rep.trials = trials;
  std::vector<double> ratios(static_cast<std::size_t>(std::max(trials, 0)), 0.0);
  parallel_for(ratios.size(), [&](std::size_t k) {
    const std::uint64_t s = derive_seed(seed, 0x6761696eu, static_cast<std::uint32_t>(k));
    std::mt19937_64 rng(s);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> scale(0.0, 3.0);
    const double xs = scale(rng), us = scale(rng);
    VectorXd a(n), b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      a(i) = xs * nd(rng);
      b(i) = xs * nd(rng);
    }
    MatrixXd ua = gen_input({20.0, 3.0, horizon, s}), ub = ua;
    for (Eigen::Index t = 0; t < horizon; ++t)
      for (Eigen::Index j = 0; j < m; ++j) ub(t, j) += us * nd(rng);
    if (k % 4 == 0) ub = ua;  // pure initial-condition trials
    const MatrixXd ya = simulate(ex, ua, a).y;
    const MatrixXd yb = simulate(ex, ub, b).y;
    const VectorXd dx0 = a - b;
    const double v0 = dx0.dot(W * dx0);
    double lhs = 0.0, du2 = 0.0, worst = 0.0;
    for (Eigen::Index t = 0; t < horizon; ++t) {
      lhs += (ya.row(t) - yb.row(t)).squaredNorm();
      du2 += (ua.row(t) - ub.row(t)).squaredNorm();
      worst = std::max(worst, detail::ratio_or_zero(lhs, gamma * gamma * du2 + gamma * v0));
    }
    ratios[k] = worst;
  });
  for (double r : ratios) rep.max_ratio = std::max(rep.max_ratio, r);
  return rep;
}

struct ContractionReport {
  double max_ratio = 0.0;  // max over trials and steps of V_{t+1} / V_t
  int trials = 0;
};

/// Two trajectories from different initial states under a shared input;
/// reports the worst one-step ratio of V_t = dx_t' E' P^{-1} E dx_t.
inline ContractionReport contraction_trial(const CertifiedBundle& bundle, int trials,
                                           Eigen::Index horizon, std::uint64_t seed) {
  if (bundle.kind == ConstraintKind::CiRnnContraction) {
    throw std::invalid_argument("contraction_trial: expects a robust-star or robust-gamma bundle");
  }
  const ExplicitModel ex = to_explicit(bundle.theta);
  const MatrixXd W = storage_weight(bundle);
  const Eigen::Index n = ex.n();
  ContractionReport rep;
  rep.trials = trials;
  std::vector<double> ratios(static_cast<std::size_t>(std::max(trials, 0)), 0.0);
  parallel_for(ratios.size(), [&](std::size_t k) {
    const std::uint64_t s = derive_seed(seed, 0x636f6e74u, static_cast<std::uint32_t>(k));
    std::mt19937_64 rng(s);
    std::normal_distribution<double> nd(0.0, 1.0);
    VectorXd a(n), b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      a(i) = 3.0 * nd(rng);
      b(i) = 3.0 * nd(rng);
    }
    const MatrixXd u = gen_input({20.0, 3.0, horizon, s});
    const MatrixXd xa = simulate(ex, u, a).x;
    const MatrixXd xb = simulate(ex, u, b).x;
    double worst = 0.0;
    for (Eigen::Index t = 0; t < horizon; ++t) {
      const VectorXd d0 = (xa.row(t) - xb.row(t)).transpose();
      const VectorXd d1 = (xa.row(t + 1) - xb.row(t + 1)).transpose();
      const double v0 = d0.dot(W * d0);
      if (v0 <= 1e-20) break;
      worst = std::max(worst, d1.dot(W * d1) / v0);
    }
    ratios[k] = worst;
  });
  for (double r : ratios) rep.max_ratio = std::max(rep.max_ratio, r);
  return rep;
}

// ---------------------------------------------------------------------------
// Sweeps

struct NseRow {
  std::string model;
  double sigma_u = 0.0;
  int realization = 0;
  double nse = 0.0;
};

/// NSE of every model on `realizations` test sequences per amplitude.
inline std::vector<NseRow> nse_sweep(const std::vector<std::pair<std::string, SequenceModel>>& models,
                                     const DatasetConfig& data, const std::vector<double>& sigmas,
                                     int realizations) {
  std::vector<NseRow> rows(models.size() * sigmas.size() * static_cast<std::size_t>(realizations));
  const std::size_t per_model = sigmas.size() * static_cast<std::size_t>(realizations);
  parallel_for(sigmas.size() * static_cast<std::size_t>(realizations), [&](std::size_t i) {
    const std::size_t s = i / static_cast<std::size_t>(realizations);
    const int r = static_cast<int>(i % static_cast<std::size_t>(realizations));
    const SeqBatch seq = make_test_sequence(data, sigmas[s], r);
    for (std::size_t k = 0; k < models.size(); ++k) {
      double value = std::numeric_limits<double>::infinity();
      try {
        value = nse(predict(models[k].second, seq.u), seq.y);
      } catch (const SimulationError&) {
      }
      rows[k * per_model + i] = {models[k].first, sigmas[s], r, value};
    }
  });
  return rows;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// Linear-interpolated quantile, q in [0, 1].
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median_nse(const std::vector<NseRow>& rows, const std::string& model, double sigma) {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.model == model && r.sigma_u == sigma) v.push_back(r.nse);
  return median(std::move(v));
}

}  // namespace rrnn
