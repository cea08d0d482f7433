#pragma once

// Barrier-method training: ADAM on the simulation error plus log-det
// barriers, a feasibility-only backtracking line search, and the
// learning-rate / barrier-weight schedule driven by validation NSE.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rrnn/metrics.hpp"
#include "rrnn/model_zoo.hpp"

namespace rrnn {

template <class M>
concept TrainableModel = requires(M& m, const M& cm, const VectorXd& v, const SeqBatch& b,
                                  const MatrixXd& u, VectorXd* g) {
  { pack(cm) } -> std::convertible_to<VectorXd>;
  unpack(m, v);
  { objective(cm, b, 1.0, g) } -> std::convertible_to<double>;
  { feasibility(cm) } -> std::same_as<FeasibilityReport>;
  { predict(cm, u) } -> std::convertible_to<MatrixXd>;
  { is_constrained(cm) } -> std::convertible_to<bool>;
};

struct TrainConfig {
  double lr0 = 1e-3;
  double alpha0 = 1e-3;
  double alpha_final = 1e-7;
  double lr_decay = 0.25;
  double alpha_decay = 0.1;
  int patience = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_backtracks = 50;
  int max_epochs = 2000;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& f) { throw std::invalid_argument("TrainConfig." + f); };
    if (!(lr0 > 0)) fail("lr0 must be > 0");
    if (!(alpha0 >= 0)) fail("alpha0 must be >= 0");
    if (!(lr_decay > 0 && lr_decay < 1)) fail("lr_decay must lie in (0, 1)");
    if (!(alpha_decay > 0 && alpha_decay < 1)) fail("alpha_decay must lie in (0, 1)");
    if (!(alpha_final > 0)) fail("alpha_final must be > 0");
    if (patience < 1) fail("patience must be >= 1");
    if (max_backtracks < 0) fail("max_backtracks must be >= 0");
    if (max_epochs < 1) fail("max_epochs must be >= 1");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1)) {
      fail("adam betas must lie in [0, 1)");
    }
  }
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;  // mean squared simulation error over the epoch's batches
  double val_nse = 0.0;
  double alpha = 0.0;
  double lr = 0.0;
  double lmi_margin = 0.0;  // smallest margin over the epoch's accepted iterates
  double seconds = 0.0;
  int accepted = 0;
  int rejected = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_margins;  // LMI margin of every accepted iterate
  std::vector<std::string> warnings;
  double initial_val_nse = 0.0;
  double best_val_nse = 0.0;
};

template <class Model>
struct TrainResult {
  Model model;
  TrainHistory history;
};

/// Plain ADAM state; moments persist across learning-rate changes.
class Adam {
 public:
  Adam(Eigen::Index dim, double beta1, double beta2, double eps)
      : m_(VectorXd::Zero(dim)), v_(VectorXd::Zero(dim)), b1_(beta1), b2_(beta2), eps_(eps) {}

  VectorXd step(const VectorXd& grad, double lr) {
    ++t_;
    m_ = b1_ * m_ + (1.0 - b1_) * grad;
    v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    return -lr * (m_ / c1).cwiseQuotient(((v_ / c2).cwiseSqrt().array() + eps_).matrix());
  }

 private:
  VectorXd m_, v_;
  double b1_, b2_, eps_;
  long t_ = 0;
};

template <class Model>
double validation_nse(const Model& model, const SeqBatch& val) {
  return nse(predict(model, val.u), val.y);
}

/// Barrier objective (simulation error + alpha * barriers) without gradient.
template <TrainableModel Model>
double barrier_objective(const Model& model, const SeqBatch& batch, double alpha) {
  return objective(model, batch, alpha, nullptr);
}

/// Exact gradient of barrier_objective in pack() order.
template <TrainableModel Model>
VectorXd gradient(const Model& model, const SeqBatch& batch, double alpha) {
  VectorXd g;
  objective(model, batch, alpha, &g);
  return g;
}

template <TrainableModel Model>
TrainResult<Model> train(const Model& init, std::span<const SeqBatch> batches,
                         const SeqBatch& val, const TrainConfig& cfg,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  if (batches.empty()) throw std::invalid_argument("train: need at least one training batch");
  const FeasibilityReport f0 = feasibility(init);
  if (!f0.feasible) {
    throw InfeasibleError("train: initial model is not strictly feasible (lmi margin " +
                          std::to_string(f0.lmi_margin) + ")");
  }
  const bool constrained = is_constrained(init);

  Model current = init;
  Model best = init;
  VectorXd params = pack(current);
  Adam adam(params.size(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(batches.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainHistory hist;
  hist.initial_val_nse = validation_nse(current, val);
  double best_nse = hist.initial_val_nse;
  double alpha = constrained ? cfg.alpha0 : 0.0;
  double alpha_sched = cfg.alpha0;
  double lr = cfg.lr0;
  int since_improvement = 0;
  // Training ends at the schedule trigger that brings alpha down to alpha_final.
  const double alpha_stop = cfg.alpha_final * (1.0 + 1e-9);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.alpha = alpha_sched;
    rec.lr = lr;
    rec.lmi_margin = std::numeric_limits<double>::infinity();
    double loss_sum = 0.0;
    int loss_count = 0;

    for (std::size_t k : order) {
      const SeqBatch& batch = batches[k];
      VectorXd grad;
      try {
        objective(current, batch, alpha, &grad);
        loss_sum += sim_loss(current, batch);
        ++loss_count;
      } catch (const SimulationError& e) {
        hist.warnings.push_back("epoch " + std::to_string(epoch) + ": " + e.what());
        ++rec.rejected;
        continue;
      }
      if (!grad.allFinite()) {
        hist.warnings.push_back("epoch " + std::to_string(epoch) + ": non-finite gradient");
        ++rec.rejected;
        continue;
      }
      VectorXd step = adam.step(grad, lr);
      bool accepted = false;
      Model candidate = current;
      FeasibilityReport rep;
      for (int bt = 0; bt <= cfg.max_backtracks; ++bt) {
        unpack(candidate, params + step);
        rep = feasibility(candidate);
        if (rep.feasible) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        ++rec.rejected;
        continue;
      }
      params += step;
      current = std::move(candidate);
      ++rec.accepted;
      rec.lmi_margin = std::min(rec.lmi_margin, rep.lmi_margin);
      hist.step_margins.push_back(rep.lmi_margin);
    }
    if (rec.accepted == 0) {
      hist.warnings.push_back("epoch " + std::to_string(epoch) + ": every step was rejected");
      rec.lmi_margin = feasibility(current).lmi_margin;
    }
    rec.loss = loss_count > 0 ? loss_sum / loss_count : std::numeric_limits<double>::quiet_NaN();

    double v = std::numeric_limits<double>::infinity();
    try {
      v = validation_nse(current, val);
    } catch (const SimulationError& e) {
      hist.warnings.push_back("epoch " + std::to_string(epoch) + ": validation " + e.what());
    }
    if (!std::isfinite(v)) v = std::numeric_limits<double>::infinity();
    rec.val_nse = v;
    if (v < best_nse) {
      best_nse = v;
      best = current;
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    hist.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (since_improvement >= cfg.patience) {
      lr *= cfg.lr_decay;
      alpha_sched *= cfg.alpha_decay;
      if (constrained) alpha = alpha_sched;
      current = best;
      params = pack(current);
      since_improvement = 0;
      if (alpha_sched <= alpha_stop) break;
    }
  }
  hist.best_val_nse = best_nse;
  return {std::move(best), std::move(hist)};
}

}  // namespace rrnn
