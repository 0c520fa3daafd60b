#pragma once

#include <cmath>
#include <memory>
#include <optional>

#include "dsb/measures.hpp"
#include "dsb/random.hpp"
#include "dsb/state_process.hpp"

namespace dsb::test {

inline Vector random_simplex(Rng& rng, std::size_t d, double floor = 0.05) {
  Vector v(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = floor + rng.uniform();
  return v / v.sum();
}

inline Matrix random_stochastic(Rng& rng, std::size_t d) {
  Matrix m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) = random_simplex(rng, d).transpose();
  return m;
}

inline Coupling random_coupling(Rng& rng, std::size_t d) {
  Matrix m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 0.1 + rng.uniform();
  return Coupling(m / m.sum());
}

/// Non-increasing abar with random per-step retention in [lo, 1].
inline NoiseSchedule random_schedule(Rng& rng, std::size_t n, double lo = 0.9) {
  std::vector<double> ab(n + 1, 1.0);
  for (std::size_t k = 1; k <= n; ++k) ab[k] = ab[k - 1] * (lo + (1.0 - lo) * rng.uniform());
  return NoiseSchedule::from_alpha_bar(1.0, ab);
}

inline std::shared_ptr<const ReferenceProcess> categorical_ref(const NoiseSchedule& s, const Prior& p) {
  return std::make_shared<const ReferenceProcess>(ReferenceProcess::categorical(s, p));
}

inline MarkovChainMeasure random_chain(Rng& rng, std::size_t d, std::size_t steps) {
  MarkovChainMeasure m;
  m.init = random_simplex(rng, d);
  for (std::size_t k = 0; k < steps; ++k) m.kernels.push_back(random_stochastic(rng, d));
  return m;
}

inline double max_abs(const Matrix& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace dsb::test

namespace dsb::test {

/// Smooth decreasing abar used for convergence-order checks.
inline double smooth_alpha_bar(double t) { return std::exp(-1.5 * t - 0.8 * t * t); }

/// max |I + A_k dt - P_{k:k+1}| at t = 1/2 on an n-step grid, reference or pinned toward z.
double one_step_error(std::size_t n, std::optional<std::size_t> z = std::nullopt);

}  // namespace dsb::test
