#pragma once

// Four-mass nonlinear spring-damper benchmark: force on mass 1 in, position
// of mass 4 out. Spring/damper i joins mass i to mass i-1, with mass 0 being
// the wall.

#include <array>
#include <cmath>
#include <cstring>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rrnn/models.hpp"
#include "rrnn/parallel.hpp"

namespace rrnn {

struct MsdConfig {
  std::array<double, 4> masses{1.0 / 4, 1.0 / 3, 5.0 / 12, 1.0 / 2};
  std::array<double, 4> dampers{1.0 / 4, 1.0 / 3, 5.0 / 12, 1.0 / 2};
  std::array<double, 4> springs{1.0, 5.0 / 6, 2.0 / 3, 1.0 / 2};
  double sample_rate = 5.0;  // Hz
  double step = 0.01;        // integrator step, seconds

  double sample_interval() const { return 1.0 / sample_rate; }

  int substeps() const {
    const double r = sample_interval() / step;
    const long k = std::lround(r);
    if (k < 1 || std::abs(r - static_cast<double>(k)) > 1e-9 * r) {
      throw std::invalid_argument("MsdConfig: integrator step must divide the sample interval");
    }
    return static_cast<int>(k);
  }

  void validate() const {
    for (int i = 0; i < 4; ++i) {
      if (!(masses[i] > 0) || !(dampers[i] >= 0) || !(springs[i] > 0)) {
        throw std::invalid_argument("MsdConfig: physical constants must be positive");
      }
    }
    if (!(sample_rate > 0) || !(step > 0)) throw std::invalid_argument("MsdConfig: rates must be > 0");
    substeps();
  }
};

struct SignalConfig {
  double tau = 20.0;      // hold times ~ U(0, tau) seconds
  double sigma_u = 3.0;   // amplitude std, Newtons
  Eigen::Index T = 1000;  // samples
  std::uint64_t seed = 0;
};

using MsdState = Eigen::Matrix<double, 8, 1>;  // [positions; velocities]

/// Piecewise-linear spring profile (continuous at d = +-1).
inline double spring_gamma(double d) {
  if (d <= -1.0) return d + 0.75;
  if (d < 1.0) return 0.25 * d;
  return d - 0.75;
}

/// Integral of spring_gamma from 0 to d.
inline double spring_potential(double d) {
  const double a = std::abs(d);
  if (a < 1.0) return 0.125 * d * d;
  return 0.5 * a * a - 0.75 * a + 0.375;
}

inline MsdState msd_derivative(const MsdState& s, double force, const MsdConfig& cfg) {
  MsdState ds;
  std::array<double, 5> spring{}, damper{};  // spring[i]: force of element i, element 4 absent
  for (int i = 0; i < 4; ++i) {
    const double x_prev = i == 0 ? 0.0 : s(i - 1);
    const double v_prev = i == 0 ? 0.0 : s(4 + i - 1);
    spring[i] = cfg.springs[i] * spring_gamma(s(i) - x_prev);
    damper[i] = cfg.dampers[i] * (s(4 + i) - v_prev);
  }
  for (int i = 0; i < 4; ++i) {
    double f = -spring[i] - damper[i] + spring[i + 1] + damper[i + 1];
    if (i == 0) f += force;
    ds(i) = s(4 + i);
    ds(4 + i) = f / cfg.masses[i];
  }
  return ds;
}

inline double msd_energy(const MsdState& s, const MsdConfig& cfg) {
  double e = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double x_prev = i == 0 ? 0.0 : s(i - 1);
    e += 0.5 * cfg.masses[i] * s(4 + i) * s(4 + i);
    e += cfg.springs[i] * spring_potential(s(i) - x_prev);
  }
  return e;
}

inline MsdState rk4_step(const MsdState& s, double force, double h, const MsdConfig& cfg) {
  const MsdState k1 = msd_derivative(s, force, cfg);
  const MsdState k2 = msd_derivative(s + 0.5 * h * k1, force, cfg);
  const MsdState k3 = msd_derivative(s + 0.5 * h * k2, force, cfg);
  const MsdState k4 = msd_derivative(s + h * k3, force, cfg);
  return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

namespace detail {
// Spring-law segment of every spring: -1 (d <= -1), 0, or +1 (d >= 1).
inline std::array<int, 4> spring_regions(const MsdState& s) {
  std::array<int, 4> r{};
  for (int i = 0; i < 4; ++i) {
    const double d = s(i) - (i == 0 ? 0.0 : s(i - 1));
    r[i] = d <= -1.0 ? -1 : (d < 1.0 ? 0 : 1);
  }
  return r;
}
}  // namespace detail

/// One integrator step of length h. A step whose end lands on a different
/// spring segment is split at the crossing (located by bisection) so that
/// every RK4 stage sees a single linear piece.
inline MsdState msd_step(MsdState s, double force, double h, const MsdConfig& cfg) {
  for (int split = 0; split < 16 && h > 0.0; ++split) {
    const auto r0 = detail::spring_regions(s);
    const MsdState full = rk4_step(s, force, h, cfg);
    if (detail::spring_regions(full) == r0) return full;
    double lo = 0.0, hi = h;
    for (int it = 0; it < 40; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (detail::spring_regions(rk4_step(s, force, mid, cfg)) == r0) lo = mid;
      else hi = mid;
    }
    s = rk4_step(s, force, hi, cfg);
    h -= hi;
  }
  return h > 0.0 ? rk4_step(s, force, h, cfg) : s;
}

/// Piecewise-constant excitation realized on the integrator grid.
struct InputSignal {
  std::vector<double> fine;          // one value per integrator step
  std::vector<double> hold_lengths;  // continuous-time hold draws, seconds
  double step = 0.01;
};

inline InputSignal gen_input_signal(const SignalConfig& sig, const MsdConfig& msd) {
  if (!(sig.tau > 0.0)) throw std::invalid_argument("SignalConfig.tau must be > 0");
  if (sig.T < 1) throw std::invalid_argument("SignalConfig.T must be >= 1");
  if (sig.sigma_u < 0.0) throw std::invalid_argument("SignalConfig.sigma_u must be >= 0");
  const int sub = msd.substeps();
  const std::size_t steps = static_cast<std::size_t>(sig.T) * static_cast<std::size_t>(sub);
  std::mt19937_64 rng(sig.seed);
  std::uniform_real_distribution<double> hold(0.0, sig.tau);
  std::normal_distribution<double> amp(0.0, 1.0);

  InputSignal out;
  out.step = msd.step;
  out.fine.resize(steps);
  double t_switch = 0.0;
  std::size_t filled = 0;
  while (filled < steps) {
    const double len = hold(rng);
    const double value = sig.sigma_u * amp(rng);
    out.hold_lengths.push_back(len);
    t_switch += len;
    // switch times quantized to the integrator grid
    const auto end = std::min<std::size_t>(
        steps, static_cast<std::size_t>(std::llround(t_switch / msd.step)));
    for (; filled < end; ++filled) out.fine[filled] = value;
  }
  return out;
}

/// Input sampled at the configured sample rate (T x 1).
inline MatrixXd gen_input(const SignalConfig& sig, const MsdConfig& msd = {}) {
  const InputSignal s = gen_input_signal(sig, msd);
  const int sub = msd.substeps();
  MatrixXd u(sig.T, 1);
  for (Eigen::Index k = 0; k < sig.T; ++k) u(k, 0) = s.fine[static_cast<std::size_t>(k) * sub];
  return u;
}

/// Integrates from the zero state with RK4; returns sampled position of mass 4.
inline VectorXd simulate_msd(const InputSignal& input, Eigen::Index T, const MsdConfig& cfg,
                             MsdState state = MsdState::Zero()) {
  const int sub = cfg.substeps();
  VectorXd y(T);
  for (Eigen::Index k = 0; k < T; ++k) {
    y(k) = state(3);
    for (int j = 0; j < sub; ++j) {
      const std::size_t i = static_cast<std::size_t>(k) * sub + j;
      state = msd_step(state, input.fine[i], cfg.step, cfg);
    }
    if (!state.allFinite()) {
      throw SimulationError(k, "simulate_msd: non-finite state at t = " +
                                   std::to_string(static_cast<double>(k + 1) /
                                                  cfg.sample_rate) +
                                   " s");
    }
  }
  return y;
}

/// Deterministic per-sequence seed derived from (master, split, index).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint32_t split, std::uint32_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    split, index};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

/// One measured sequence. noise_snr_db = +inf disables noise.
inline SeqBatch make_sequence(const SignalConfig& sig, const MsdConfig& msd, double noise_snr_db) {
  const InputSignal input = gen_input_signal(sig, msd);
  const int sub = msd.substeps();
  SeqBatch b;
  b.u.resize(sig.T, 1);
  for (Eigen::Index k = 0; k < sig.T; ++k) b.u(k, 0) = input.fine[static_cast<std::size_t>(k) * sub];
  const VectorXd clean = simulate_msd(input, sig.T, msd);
  b.y = clean;
  if (std::isfinite(noise_snr_db)) {
    const double rms = std::sqrt(clean.squaredNorm() / static_cast<double>(clean.size()));
    const double sd = rms * std::pow(10.0, -noise_snr_db / 20.0);
    std::mt19937_64 rng(derive_seed(sig.seed, 0x6e6f6973u, 0));
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Eigen::Index k = 0; k < sig.T; ++k) b.y(k, 0) += sd * nd(rng);
  }
  b.dt = msd.sample_interval();
  b.seed = sig.seed;
  b.sigma_u = sig.sigma_u;
  b.tau = sig.tau;
  return b;
}

struct DatasetConfig {
  MsdConfig msd;
  int train_batches = 100;
  Eigen::Index train_length = 1000;
  Eigen::Index val_length = 5000;
  Eigen::Index test_length = 1000;
  double tau = 20.0;
  double train_sigma = 3.0;
  double val_sigma = 3.0;
  std::vector<double> test_sigmas{0.5, 1, 2, 3, 4, 5, 6, 8, 10};
  int test_realizations = 30;
  double noise_snr_db = 30.0;
  std::uint64_t seed = 0;
};

struct Dataset {
  std::vector<SeqBatch> train;
  SeqBatch val;
  std::map<double, std::vector<SeqBatch>> tests;  // keyed by sigma_u
};

namespace split {
inline constexpr std::uint32_t train = 1, val = 2, test = 3;
}

/// Test realization r at amplitude sigma; the seed depends only on
/// (master seed, sigma, r), so any amplitude grid can be regenerated.
inline SeqBatch make_test_sequence(const DatasetConfig& cfg, double sigma, int r) {
  std::uint64_t bits = 0;
  static_assert(sizeof(bits) == sizeof(sigma));
  std::memcpy(&bits, &sigma, sizeof(bits));
  const std::uint64_t s1 = derive_seed(cfg.seed, split::test, static_cast<std::uint32_t>(r));
  const std::uint64_t s2 = derive_seed(s1 ^ bits, split::test, static_cast<std::uint32_t>(bits >> 32));
  SignalConfig sig{cfg.tau, sigma, cfg.test_length, s2};
  return make_sequence(sig, cfg.msd, cfg.noise_snr_db);
}

inline Dataset make_dataset(const DatasetConfig& cfg) {
  cfg.msd.validate();
  if (cfg.train_batches < 1) throw std::invalid_argument("DatasetConfig.train_batches must be >= 1");
  Dataset ds;
  ds.train.resize(static_cast<std::size_t>(cfg.train_batches));
  parallel_for(ds.train.size(), [&](std::size_t i) {
    SignalConfig sig{cfg.tau, cfg.train_sigma, cfg.train_length,
                     derive_seed(cfg.seed, split::train, static_cast<std::uint32_t>(i))};
    ds.train[i] = make_sequence(sig, cfg.msd, cfg.noise_snr_db);
  });
  ds.val = make_sequence({cfg.tau, cfg.val_sigma, cfg.val_length, derive_seed(cfg.seed, split::val, 0)},
                         cfg.msd, cfg.noise_snr_db);
  const std::size_t per = static_cast<std::size_t>(std::max(0, cfg.test_realizations));
  std::vector<SeqBatch> flat(cfg.test_sigmas.size() * per);
  parallel_for(flat.size(), [&](std::size_t i) {
    flat[i] = make_test_sequence(cfg, cfg.test_sigmas[i / per], static_cast<int>(i % per));
  });
  for (std::size_t s = 0; s < cfg.test_sigmas.size(); ++s) {
    auto& v = ds.tests[cfg.test_sigmas[s]];
    for (std::size_t r = 0; r < per; ++r) v.push_back(std::move(flat[s * per + r]));
  }
  return ds;
}

}  // namespace rrnn
