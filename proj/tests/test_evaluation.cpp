#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace rrnn;

namespace {

CertifiedBundle scalar_lti(double a) {
  MatrixXd A(1, 1), B(1, 1), C(1, 1), D(1, 1);
  A << a;
  B << 1.0;
  C << 1.0;
  D << 0.0;
  return embed_lti(A, B, C, D);
}

}  // namespace

TEST(Nse, Examples) {
  const MatrixXd y = (MatrixXd(3, 1) << 1, -2, 0.5).finished();
  EXPECT_EQ(nse(y, y), 0.0);
  EXPECT_DOUBLE_EQ(nse(MatrixXd::Zero(3, 1), y), 1.0);
  EXPECT_DOUBLE_EQ(nse(2.0 * y, y), 1.0);
  for (double c : {-1.5, 0.0, 0.3, 1.0, 4.0}) EXPECT_NEAR(nse(c * y, y), std::abs(c - 1.0), 1e-15);
  EXPECT_THROW(nse(y, MatrixXd::Zero(3, 1)), std::invalid_argument);
  EXPECT_THROW(nse(MatrixXd::Zero(2, 1), y), std::invalid_argument);
}

TEST(Attack, StaticGainIsExact) {
  CertifiedBundle b;
  b.theta = ImplicitParams::zeros(1, 1, 1, 1);
  b.theta.D12 << 2.0;
  b.P = MatrixXd::Identity(1, 1);
  AttackConfig cfg;
  cfg.iterations = 20;
  cfg.restarts = 2;
  cfg.horizon = 50;
  const RobustnessReport r = lipschitz_attack(b, cfg);
  EXPECT_NEAR(r.gamma_hat, 2.0, 1e-12);
  ASSERT_EQ(r.restart_ratios.size(), 2u);
  EXPECT_EQ(r.gamma_hat, std::max(r.restart_ratios[0], r.restart_ratios[1]));
}

TEST(Attack, ApproachesHinfNormFromBelow) {
  AttackConfig cfg;
  cfg.iterations = 200;
  cfg.restarts = 2;
  cfg.horizon = 300;
  const RobustnessReport r = lipschitz_attack(scalar_lti(0.5), cfg);
  EXPECT_LE(r.gamma_hat, 2.0 + 1e-9);
  EXPECT_GE(r.gamma_hat, 1.8);
}

TEST(Attack, BelowCertifiedBound) {
  const CertifiedBundle b = init_robust({5, 5, 1, 1}, 3.0, 12, Activation::tanh);
  const double cert = bisect_gamma(b.theta, b.P, 1e-9, 3.0);
  AttackConfig cfg;
  cfg.iterations = 100;
  cfg.restarts = 2;
  cfg.horizon = 200;
  const RobustnessReport r = lipschitz_attack(SequenceModel(b), cfg, cert);
  EXPECT_LE(r.gamma_hat, cert * (1.0 + 1e-6));
  EXPECT_GT(r.gamma_hat, 0.0);
  ASSERT_TRUE(r.gamma_cert.has_value());
}

TEST(Attack, RejectsBadConfig) {
  AttackConfig cfg;
  cfg.restarts = 0;
  EXPECT_THROW(lipschitz_attack(scalar_lti(0.5), cfg), std::invalid_argument);
}

TEST(GainTrial, CertifiedModelRespectsBound) {
  const CertifiedBundle b = init_robust({5, 5, 1, 1}, 2.0, 13);
  const GainTrialReport r = gain_trial(b, 2.0, 100, 200, 1);
  EXPECT_EQ(r.trials, 100);
  EXPECT_LE(r.max_ratio, 1.0);
  EXPECT_GT(r.max_ratio, 0.0);
}

TEST(GainTrial, CorruptedBundleViolatesBound) {
  CertifiedBundle b = scalar_lti(0.5);
  const double g = bisect_gamma(b.theta, b.P, 1e-3, *find_feasible_gamma(b.theta, b.P));
  b.kind = ConstraintKind::RobustGamma;
  b.gamma = g;
  EXPECT_LE(gain_trial(b, g, 100, 200, 1).max_ratio, 1.0);
  b.theta.B2 *= 10.0;
  EXPECT_GT(gain_trial(b, g, 100, 200, 1).max_ratio, 1.0);
}

TEST(GainTrial, ZeroTrialsReportZero) {
  const CertifiedBundle b = init_robust({3, 3, 1, 1}, 2.0, 1);
  EXPECT_EQ(gain_trial(b, 2.0, 0, 10, 1).max_ratio, 0.0);
}

TEST(ContractionTrial, CertifiedModelContracts) {
  for (std::optional<double> g : {std::optional<double>{}, std::optional<double>{3.0}}) {
    const CertifiedBundle b = init_robust({5, 5, 1, 1}, g, 14);
    const ContractionReport r = contraction_trial(b, 20, 100, 2);
    EXPECT_LT(r.max_ratio, 1.0);
    EXPECT_GT(r.max_ratio, 0.0);
  }
}

TEST(ContractionTrial, OneStepContractionWithoutStateFeedback) {
  CertifiedBundle b = init_robust({4, 4, 1, 1}, std::nullopt, 15);
  b.theta.F.setZero();
  b.theta.B1.setZero();
  EXPECT_EQ(contraction_trial(b, 5, 20, 3).max_ratio, 0.0);
}

TEST(ContractionTrial, LtiDecayMatchesLyapunovBound) {
  std::mt19937_64 rng(16);
  const MatrixXd A = oracle::random_stable(rng, 4, 0.9);
  const CertifiedBundle b = embed_lti(A, oracle::randn(rng, 4, 1), oracle::randn(rng, 1, 4),
                                      MatrixXd::Zero(1, 1));
  // V = dx' P dx with P - A'PA = I gives V+ <= (1 - 1/lambda_max(P)) V
  const double lmax = Eigen::SelfAdjointEigenSolver<MatrixXd>(b.P).eigenvalues().maxCoeff();
  const ContractionReport r = contraction_trial(b, 20, 50, 4);
  EXPECT_LE(r.max_ratio, 1.0 - 1.0 / lmax + 1e-9);
  EXPECT_THROW(contraction_trial(contraction_bundle(oracle::random_cirnn(rng, 3, Activation::relu).first,
                                                    VectorXd::Ones(3)),
                                 1, 5, 1),
               std::invalid_argument);
}

TEST(Sweep, RowCountAndOrdering) {
  DatasetConfig cfg;
  cfg.test_length = 40;
  std::vector<std::pair<std::string, SequenceModel>> models{
      {"a", init_robust({3, 3, 1, 1}, std::nullopt, 1)}, {"b", init_elman({3, 3, 1, 1}, 2)}};
  const auto rows = nse_sweep(models, cfg, {1.0, 3.0, 10.0}, 4);
  ASSERT_EQ(rows.size(), 2u * 3u * 4u);
  EXPECT_EQ(rows.front().model, "a");
  EXPECT_EQ(rows.back().model, "b");
  EXPECT_EQ(rows.back().sigma_u, 10.0);
  EXPECT_EQ(rows.back().realization, 3);
  // same test sequence for both models
  const SeqBatch s = make_test_sequence(cfg, 3.0, 2);
  EXPECT_DOUBLE_EQ(rows[4 + 2].nse, nse(predict(models[0].second, s.u), s.y));
}

TEST(Stats, MedianAndQuantile) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_TRUE(std::isnan(median({})));
  EXPECT_EQ(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.25), 2.0);
  EXPECT_EQ(quantile({1.0, 2.0}, 1.0), 2.0);
}
