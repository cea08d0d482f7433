#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace rrnn;

namespace {

struct Toy {
  std::vector<SeqBatch> train;
  SeqBatch val;
};

Toy toy_data() {
  DatasetConfig cfg;
  cfg.train_batches = 4;
  cfg.train_length = 60;
  cfg.val_length = 120;
  cfg.test_realizations = 0;
  cfg.seed = 5;
  Dataset ds = make_dataset(cfg);
  return {ds.train, ds.val};
}

TrainConfig quick(int epochs) {
  TrainConfig tc;
  tc.lr0 = 1e-2;
  tc.max_epochs = epochs;
  tc.patience = 3;
  tc.seed = 1;
  return tc;
}

}  // namespace

TEST(Adam, FirstStepIsSignScaled) {
  Adam adam(3, 0.9, 0.999, 1e-8);
  VectorXd g(3);
  g << 2.0, -0.5, 0.0;
  const VectorXd s = adam.step(g, 0.1);
  EXPECT_NEAR(s(0), -0.1, 1e-8);
  EXPECT_NEAR(s(1), 0.1, 1e-7);
  EXPECT_EQ(s(2), 0.0);
}

TEST(TrainConfig, Validation) {
  TrainConfig tc;
  EXPECT_NO_THROW(tc.validate());
  tc.lr0 = 0;
  EXPECT_THROW(tc.validate(), std::invalid_argument);
  tc = TrainConfig{};
  tc.lr_decay = 1.0;
  EXPECT_THROW(tc.validate(), std::invalid_argument);
  tc = TrainConfig{};
  tc.patience = 0;
  EXPECT_THROW(tc.validate(), std::invalid_argument);
}

TEST(Train, FeasibleAtEveryAcceptedStepAndImproves) {
  const Toy d = toy_data();
  const CertifiedBundle init = init_robust({6, 6, 1, 1}, 3.0, 2);
  const auto res = train(init, std::span<const SeqBatch>(d.train), d.val, quick(15));
  ASSERT_FALSE(res.history.step_margins.empty());
  for (double m : res.history.step_margins) EXPECT_GE(m, kStrictEps);
  EXPECT_TRUE(feasibility(res.model).feasible);
  EXPECT_LT(res.history.best_val_nse, res.history.initial_val_nse);
  EXPECT_DOUBLE_EQ(validation_nse(res.model, d.val), res.history.best_val_nse);
}

TEST(Train, DeterministicForFixedSeed) {
  const Toy d = toy_data();
  const CertifiedBundle init = init_robust({4, 4, 1, 1}, std::nullopt, 3);
  const auto a = train(init, std::span<const SeqBatch>(d.train), d.val, quick(5));
  const auto b = train(init, std::span<const SeqBatch>(d.train), d.val, quick(5));
  EXPECT_EQ(pack(a.model), pack(b.model));
  ASSERT_EQ(a.history.epochs.size(), b.history.epochs.size());
  for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
    EXPECT_EQ(a.history.epochs[i].val_nse, b.history.epochs[i].val_nse);
  }
}

TEST(Train, ScheduleDecaysOnPlateauAndStops) {
  const Toy d = toy_data();
  const CertifiedBundle init = init_robust({4, 4, 1, 1}, std::nullopt, 4);
  TrainConfig tc = quick(500);
  tc.lr0 = 1e3;  // every step is infeasible and rejected, so validation NSE never moves
  tc.max_backtracks = 0;
  tc.patience = 2;
  tc.alpha0 = 1e-3;
  tc.alpha_final = 1e-5;
  const auto res = train(init, std::span<const SeqBatch>(d.train), d.val, tc);
  // triggers at epochs 2 and 4 bring alpha to 1e-4 then 1e-5
  ASSERT_EQ(res.history.epochs.size(), 4u);
  EXPECT_DOUBLE_EQ(res.history.epochs[2].lr, 1e3 * 0.25);
  EXPECT_TRUE(res.history.step_margins.empty());
  EXPECT_DOUBLE_EQ(res.history.epochs[2].alpha, 1e-4);
}

TEST(Train, DegenerateScheduleRunsToFirstTrigger) {
  const Toy d = toy_data();
  const CertifiedBundle init = init_robust({4, 4, 1, 1}, std::nullopt, 4);
  TrainConfig tc = quick(500);
  tc.lr0 = 1e3;
  tc.max_backtracks = 0;
  tc.patience = 3;
  tc.alpha0 = tc.alpha_final = 1e-4;
  const auto res = train(init, std::span<const SeqBatch>(d.train), d.val, tc);
  EXPECT_EQ(res.history.epochs.size(), 3u);
}

TEST(Train, RejectsInfeasibleStart) {
  const Toy d = toy_data();
  CertifiedBundle init = init_robust({4, 4, 1, 1}, std::nullopt, 4);
  init.theta.F *= 1e3;
  EXPECT_THROW(train(init, std::span<const SeqBatch>(d.train), d.val, quick(2)), InfeasibleError);
  EXPECT_THROW(train(init_robust({4, 4, 1, 1}, std::nullopt, 4), std::span<const SeqBatch>(),
                     d.val, quick(2)),
               std::invalid_argument);
}

TEST(Train, LargeStepsBacktrackAndStayFeasible) {
  const Toy d = toy_data();
  const CertifiedBundle init = init_robust({4, 4, 1, 1}, 2.0, 6);
  TrainConfig tc = quick(3);
  tc.lr0 = 10.0;
  const auto res = train(init, std::span<const SeqBatch>(d.train), d.val, tc);
  for (double m : res.history.step_margins) EXPECT_GE(m, kStrictEps);
  EXPECT_TRUE(feasibility(res.model).feasible);
}

TEST(Train, BaselinesTrain) {
  const Toy d = toy_data();
  const std::span<const SeqBatch> batches(d.train);
  const auto e = train(init_elman({4, 4, 1, 1}, 1), batches, d.val, quick(8));
  EXPECT_LT(e.history.best_val_nse, e.history.initial_val_nse);
  EXPECT_EQ(e.history.epochs.front().alpha, 1e-3);  // schedule value is logged
  const auto c = train(init_contracting({4, 4, 1, 1}, false, 2), batches, d.val, quick(8));
  EXPECT_TRUE(feasibility(c.model).feasible);
  EXPECT_LT(c.history.best_val_nse, c.history.initial_val_nse);
  const auto s = train(init_contracting({4, 4, 1, 1}, true, 3), batches, d.val, quick(8));
  EXPECT_EQ(s.model.net.E, MatrixXd::Identity(4, 4));
  const auto l = train(Lstm::random(4, 1, 1, 4), batches, d.val, quick(8));
  EXPECT_LT(l.history.best_val_nse, l.history.initial_val_nse);
}
