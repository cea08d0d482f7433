#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace rrnn;

namespace {

SeqBatch toy_batch(std::uint64_t seed, Eigen::Index T = 20) {
  std::mt19937_64 rng(seed);
  SeqBatch b;
  b.u = oracle::randn(rng, T, 1, 2.0);
  b.y = oracle::randn(rng, T, 1);
  return b;
}

// Checks every coordinate (or a random subset of `limit`) of the analytic gradient.
template <class Model>
void check_gradient(const Model& model, const SeqBatch& batch, double alpha, double tol,
                    int limit = -1) {
  const VectorXd x0 = pack(model);
  const VectorXd g = gradient(model, batch, alpha);
  ASSERT_EQ(g.size(), x0.size());
  auto f = [&](const VectorXd& x) {
    Model m = model;
    unpack(m, x);
    return barrier_objective(m, batch, alpha);
  };
  std::vector<Eigen::Index> coords(static_cast<std::size_t>(x0.size()));
  std::iota(coords.begin(), coords.end(), 0);
  if (limit > 0 && limit < x0.size()) {
    std::mt19937_64 rng(42);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(limit));
  }
  const double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
  for (Eigen::Index i : coords) {
    const double fd = oracle::central_difference(f, x0, i, 1e-5);
    EXPECT_NEAR(g(i), fd, tol * scale) << "coordinate " << i;
  }
}

}  // namespace

TEST(Gradient, RobustStarTanh) {
  const CertifiedBundle b = init_robust({4, 3, 1, 1}, std::nullopt, 1, Activation::tanh);
  check_gradient(b, toy_batch(1), 1e-2, 1e-6);
}

TEST(Gradient, RobustGammaTanh) {
  const CertifiedBundle b = init_robust({4, 3, 1, 1}, 2.0, 2, Activation::tanh);
  check_gradient(b, toy_batch(2), 1e-2, 1e-6);
}

TEST(Gradient, RobustGammaNonIdentityE) {
  CertifiedBundle b = init_robust({3, 3, 1, 1}, 5.0, 3, Activation::tanh);
  b.theta.E += 0.05 * MatrixXd::Ones(3, 3);
  b.theta.lambda << 0.9, 1.1, 1.3;
  b.theta.b << 0.1, -0.2, 0.3;
  ASSERT_TRUE(feasibility(b).feasible);
  check_gradient(b, toy_batch(3), 1e-1, 1e-6);
}

TEST(Gradient, RobustStarRelu) {
  const CertifiedBundle b = init_robust({4, 4, 1, 1}, std::nullopt, 4, Activation::relu);
  check_gradient(b, toy_batch(4), 1e-3, 1e-5);
}

TEST(Gradient, Elman) {
  const Elman e = init_elman({4, 4, 1, 1}, 5, Activation::tanh);
  check_gradient(e, toy_batch(5), 0.0, 1e-6);
}

TEST(Gradient, CiRnnAndSrnn) {
  for (bool identity : {false, true}) {
    ContractingRnn c = init_contracting({4, 4, 1, 1}, identity, 6, Activation::tanh);
    c.net.b = VectorXd::Constant(4, 0.1);
    if (!identity) c.net.E += 0.05 * MatrixXd::Ones(4, 4);
    ASSERT_TRUE(feasibility(c).feasible);
    check_gradient(c, toy_batch(6), 1e-2, 1e-6);
  }
}

TEST(Gradient, Lstm) {
  Lstm l = Lstm::random(3, 1, 1, 7);
  l.bias.setConstant(0.1);
  check_gradient(l, toy_batch(7), 0.0, 1e-6);
}

TEST(Gradient, InputVjpMatchesFiniteDifferences) {
  const SequenceModel models[] = {init_robust({3, 3, 1, 1}, 2.0, 1, Activation::tanh),
                                  init_elman({3, 3, 1, 1}, 2, Activation::tanh),
                                  init_contracting({3, 3, 1, 1}, false, 3, Activation::tanh),
                                  Lstm::random(3, 1, 1, 4)};
  std::mt19937_64 rng(8);
  const MatrixXd u = oracle::randn(rng, 12, 1);
  const MatrixXd w = oracle::randn(rng, 12, 1);
  for (const auto& m : models) {
    const MatrixXd g = input_vjp(m, u, w);
    for (Eigen::Index t = 0; t < u.rows(); ++t) {
      MatrixXd up = u, um = u;
      up(t, 0) += 1e-6;
      um(t, 0) -= 1e-6;
      const double fd =
          ((predict(m, up).array() * w.array()).sum() - (predict(m, um).array() * w.array()).sum()) /
          2e-6;
      EXPECT_NEAR(g(t, 0), fd, 1e-7 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Objective, BarrierRejectsInfeasiblePoint) {
  CertifiedBundle b = init_robust({3, 3, 1, 1}, std::nullopt, 1);
  b.theta.F *= 100.0;
  EXPECT_THROW(barrier_objective(b, toy_batch(1), 1e-3), InfeasibleError);
  b = init_robust({3, 3, 1, 1}, std::nullopt, 1);
  SeqBatch bad = toy_batch(1);
  bad.y = MatrixXd::Zero(5, 1);
  EXPECT_THROW(barrier_objective(b, bad, 1e-3), DimensionError);
}

TEST(Objective, AlphaZeroIsPlainLoss) {
  const CertifiedBundle b = init_robust({3, 3, 1, 1}, std::nullopt, 1);
  const SeqBatch batch = toy_batch(2);
  EXPECT_DOUBLE_EQ(barrier_objective(b, batch, 0.0), sim_loss(b, batch));
}
