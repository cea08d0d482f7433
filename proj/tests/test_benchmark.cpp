#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace rrnn;

TEST(Spring, BreakpointValues) {
  EXPECT_DOUBLE_EQ(spring_gamma(0.5), 0.125);
  EXPECT_DOUBLE_EQ(spring_gamma(2.0), 1.25);
  EXPECT_DOUBLE_EQ(spring_gamma(-2.0), -1.25);
  EXPECT_DOUBLE_EQ(spring_gamma(0.0), 0.0);
  EXPECT_NEAR(spring_gamma(1.0 - 1e-12), spring_gamma(1.0), 1e-11);
  EXPECT_NEAR(spring_gamma(-1.0 + 1e-12), spring_gamma(-1.0), 1e-11);
  for (double d = -3.0; d <= 3.0; d += 0.01) EXPECT_DOUBLE_EQ(spring_gamma(-d), -spring_gamma(d));
}

TEST(Spring, PotentialIsAntiderivative) {
  for (double d = -3.0; d <= 3.0; d += 0.0625) {
    if (std::abs(std::abs(d) - 1.0) < 1e-3) continue;
    const double fd = (spring_potential(d + 1e-6) - spring_potential(d - 1e-6)) / 2e-6;
    EXPECT_NEAR(fd, spring_gamma(d), 1e-8);
  }
  EXPECT_EQ(spring_potential(0.0), 0.0);
}

TEST(Msd, SamplingGrid) {
  const MsdConfig cfg;
  EXPECT_EQ(cfg.substeps(), 20);
  EXPECT_DOUBLE_EQ(cfg.sample_interval(), 0.2);
  MsdConfig bad;
  bad.step = 0.03;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = MsdConfig{};
  bad.masses[2] = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

namespace {
double energy_drift(MsdState s, double seconds) {
  MsdConfig cfg;
  cfg.dampers = {0, 0, 0, 0};
  const double e0 = msd_energy(s, cfg);
  double worst = 0.0;
  const int steps = static_cast<int>(std::lround(seconds / cfg.step));
  for (int k = 0; k < steps; ++k) {
    s = msd_step(s, 0.0, cfg.step, cfg);
    worst = std::max(worst, std::abs(msd_energy(s, cfg) - e0));
  }
  return worst;
}
}  // namespace

TEST(Msd, UndampedEnergyConservedInLinearRegime) {
  MsdState s = MsdState::Zero();
  s(0) = 0.2;
  s(2) = -0.1;
  s(5) = 0.1;
  EXPECT_LT(energy_drift(s, 100.0), 1e-6);
}

TEST(Msd, UndampedEnergyConservedAcrossKinks) {
  MsdState s = MsdState::Zero();
  s(0) = 1.5;
  s(3) = -1.0;
  s(6) = 0.5;
  EXPECT_LT(energy_drift(s, 100.0), 1e-6);
}

TEST(Msd, DampingDissipatesEnergy) {
  const MsdConfig cfg;
  MsdState s = MsdState::Zero();
  s(0) = 2.0;
  double prev = msd_energy(s, cfg);
  for (int k = 0; k < 2000; ++k) {
    s = msd_step(s, 0.0, cfg.step, cfg);
    const double e = msd_energy(s, cfg);
    EXPECT_LE(e, prev + 1e-12);
    prev = e;
  }
}

TEST(Msd, StepHalvingConverges) {
  const SignalConfig sig{20.0, 3.0, 200, 5};
  MsdConfig coarse;
  const InputSignal in = gen_input_signal(sig, coarse);
  const VectorXd y1 = simulate_msd(in, sig.T, coarse);
  MsdConfig fine = coarse;
  fine.step = 0.005;
  InputSignal in2;
  in2.step = fine.step;
  for (double v : in.fine) {
    in2.fine.push_back(v);
    in2.fine.push_back(v);
  }
  const VectorXd y2 = simulate_msd(in2, sig.T, fine);
  EXPECT_LT((y1 - y2).cwiseAbs().maxCoeff(), 1e-5 * std::max(1.0, y2.cwiseAbs().maxCoeff()));
}

TEST(Signal, HoldMeanAndQuantizedSwitches) {
  const SignalConfig sig{20.0, 3.0, 50000, 11};
  const InputSignal s = gen_input_signal(sig, MsdConfig{});
  double mean = 0.0;
  for (double h : s.hold_lengths) mean += h;
  mean /= static_cast<double>(s.hold_lengths.size());
  EXPECT_NEAR(mean, 10.0, 0.5);
  // every value change happens on the integrator grid at a cumulative hold time
  double t = 0.0;
  std::size_t next = 0;
  for (std::size_t i = 1; i < s.fine.size(); ++i) {
    if (s.fine[i] == s.fine[i - 1]) continue;
    while (next < s.hold_lengths.size() && std::llround((t + s.hold_lengths[next]) / 0.01) < (long long)i) {
      t += s.hold_lengths[next++];
    }
    ASSERT_LT(next, s.hold_lengths.size());
    EXPECT_EQ(std::llround((t + s.hold_lengths[next]) / 0.01), static_cast<long long>(i));
  }
}

TEST(Signal, AmplitudeScale) {
  const MatrixXd u = gen_input({0.5, 2.0, 100000, 3});
  const double sd = std::sqrt(u.squaredNorm() / static_cast<double>(u.rows()));
  EXPECT_NEAR(sd, 2.0, 0.1);
  EXPECT_THROW(gen_input({0.0, 1.0, 10, 0}), std::invalid_argument);
}

TEST(Dataset, MeasuredSnr) {
  const SignalConfig sig{20.0, 3.0, 5000, 21};
  const SeqBatch noisy = make_sequence(sig, MsdConfig{}, 30.0);
  const SeqBatch clean = make_sequence(sig, MsdConfig{}, std::numeric_limits<double>::infinity());
  EXPECT_EQ(clean.u, noisy.u);
  const double snr = 10.0 * std::log10(clean.y.squaredNorm() / (noisy.y - clean.y).squaredNorm());
  EXPECT_NEAR(snr, 30.0, 0.5);
}

TEST(Dataset, DeterministicAndShaped) {
  DatasetConfig cfg;
  cfg.train_batches = 3;
  cfg.train_length = 40;
  cfg.val_length = 60;
  cfg.test_length = 30;
  cfg.test_sigmas = {1.0, 10.0};
  cfg.test_realizations = 2;
  cfg.seed = 99;
  const Dataset a = make_dataset(cfg), b = make_dataset(cfg);
  ASSERT_EQ(a.train.size(), 3u);
  EXPECT_EQ(a.train[0].u.rows(), 40);
  EXPECT_EQ(a.val.u.rows(), 60);
  ASSERT_EQ(a.tests.size(), 2u);
  EXPECT_EQ(a.tests.at(10.0).size(), 2u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.train[i].u, b.train[i].u);
    EXPECT_EQ(a.train[i].y, b.train[i].y);
  }
  EXPECT_NE(a.train[0].u, a.train[1].u);
  EXPECT_EQ(a.tests.at(1.0)[1].y, make_test_sequence(cfg, 1.0, 1).y);
  cfg.seed = 100;
  EXPECT_NE(make_dataset(cfg).val.u, a.val.u);
}

TEST(Dataset, ZeroInputStaysAtRest) {
  const SeqBatch b = make_sequence({20.0, 0.0, 50, 1}, MsdConfig{}, std::numeric_limits<double>::infinity());
  EXPECT_EQ(b.y.cwiseAbs().maxCoeff(), 0.0);
}
