#ifndef PROXAL_SYNTHETIC_HPP
#define PROXAL_SYNTHETIC_HPP

#include <cmath>

#include "proxal/dataset.hpp"

namespace proxal {

// Confounded nonlinear benchmark generator:
//   U1 ~ U[-1,2],  U2 ~ U[0,1] - 1[0 <= U1 <= 1]
//   W = [U2 + U[-1,1], U1 + N(0,1)]
//   Z = [U2 + N(0,1), U1 + U[-1,1]]
//   A = U1 + N(0,1)
//   Y = 3 cos(2 (0.3 U2 + 0.3 U1 + 0.2) + 1.5 A) + N(0,1)
inline ProxyDataset gen_synthetic_lowdim(Eigen::Index t, std::uint64_t seed) {
  if (t < 2) throw TooFewSamples("gen_synthetic_lowdim: t >= 2 required");
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> u_sym(-1.0, 1.0);
  std::uniform_real_distribution<double> u_conf(-1.0, 2.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  ProxyDataset ds;
  ds.y.resize(t);
  ds.a.resize(t, 1);
  ds.z.resize(t, 2);
  ds.w.resize(t, 2);
  for (Eigen::Index i = 0; i < t; ++i) {
    const double u1 = u_conf(rng);
    const double u2 = u01(rng) - (u1 >= 0.0 && u1 <= 1.0 ? 1.0 : 0.0);
    ds.w(i, 0) = u2 + u_sym(rng);
    ds.w(i, 1) = u1 + gauss(rng);
    ds.z(i, 0) = u2 + gauss(rng);
    ds.z(i, 1) = u1 + u_sym(rng);
    const double a = u1 + gauss(rng);
    ds.a(i, 0) = a;
    ds.y[i] = 3.0 * std::cos(2.0 * (0.3 * u2 + 0.3 * u1 + 0.2) + 1.5 * a) +
              gauss(rng);
  }
  return ds;
}

// Monte Carlo estimate of the counterfactual mean outcome at each grid
// treatment, with standard errors.
struct SyntheticTruth {
  Vector dose_grid;
  Vector theta_true;
  Vector standard_error;
  Eigen::Index mc_samples = 0;
  std::uint64_t seed = 0;
};

inline SyntheticTruth true_dose_response(const Vector& dose_grid,
                                         Eigen::Index mc_samples,
                                         std::uint64_t seed) {
  if (mc_samples < 10000)
    throw InvalidConfig("true_dose_response: mc_samples >= 1e4 required");
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> u_conf(-1.0, 2.0);

  SyntheticTruth truth;
  truth.dose_grid = dose_grid;
  truth.mc_samples = mc_samples;
  truth.seed = seed;
  truth.theta_true = Vector::Zero(dose_grid.size());
  truth.standard_error = Vector::Zero(dose_grid.size());
  Vector sum = Vector::Zero(dose_grid.size());
  Vector sum_sq = Vector::Zero(dose_grid.size());
  for (Eigen::Index s = 0; s < mc_samples; ++s) {
    const double u1 = u_conf(rng);
    const double u2 = u01(rng) - (u1 >= 0.0 && u1 <= 1.0 ? 1.0 : 0.0);
    const double phase = 2.0 * (0.3 * u2 + 0.3 * u1 + 0.2);
    for (Eigen::Index g = 0; g < dose_grid.size(); ++g) {
      const double v = 3.0 * std::cos(phase + 1.5 * dose_grid[g]);
      sum[g] += v;
      sum_sq[g] += v * v;
    }
  }
  const double n = static_cast<double>(mc_samples);
  for (Eigen::Index g = 0; g < dose_grid.size(); ++g) {
    const double mean = sum[g] / n;
    truth.theta_true[g] = mean;
    const double var = std::max(0.0, sum_sq[g] / n - mean * mean);
    truth.standard_error[g] = std::sqrt(var / n);
  }
  return truth;
}

}  // namespace proxal

#endif  // PROXAL_SYNTHETIC_HPP
