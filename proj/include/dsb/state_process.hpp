#pragma once

// Finite state spaces, noise schedules and the categorical reference process.
//
// The reference process jumps to a fresh draw from the prior m at rate
// -d/dt ln abar(t), so its transition kernel has the closed form
//
//   P_{s:t}(x, y) = r * delta_xy + (1 - r) * m(y),   r = abar(t) / abar(s).
//
// Everything here lives on a uniform time grid t_k = k * tau / n_steps and is
// addressed by grid index.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace dsb {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class StateSpace {
 public:
  explicit StateSpace(std::vector<std::string> labels);

  /// Labels "0", "1", ..., "d-1".
  static StateSpace numbered(std::size_t d);

  std::size_t size() const noexcept { return labels_.size(); }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::size_t index_of(std::string_view label) const;

 private:
  std::vector<std::string> labels_;
};

/// Strictly positive probability vector; the stationary law of the reference.
class Prior {
 public:
  explicit Prior(Vector m);
  static Prior uniform(std::size_t d);

  std::size_t size() const noexcept { return static_cast<std::size_t>(m_.size()); }
  const Vector& probabilities() const noexcept { return m_; }
  double operator[](std::size_t i) const { return m_(static_cast<Eigen::Index>(i)); }
  bool is_uniform(double tol = 1e-12) const;

 private:
  Vector m_;
};

struct ScheduleParams {
  std::size_t n_steps = 100;
  double alpha_min = 0.999;
  double tau = 1.0;
  double s_offset = 0.008;
};

/// abar on a uniform grid of n_steps intervals over [0, tau].
class NoiseSchedule {
 public:
  /// Takes abar at the n_steps + 1 grid points. Requires abar[0] == 1,
  /// strictly positive and non-increasing values.
  static NoiseSchedule from_alpha_bar(double tau, std::vector<double> alpha_bar);

  /// Samples a continuous abar(t) on the grid; abar(0) is forced to 1.
  static NoiseSchedule sample(double tau, std::size_t n_steps,
                              const std::function<double(double)>& alpha_bar);

  std::size_t steps() const noexcept { return alpha_bar_.size() - 1; }
  double tau() const noexcept { return tau_; }
  double dt() const noexcept { return tau_ / static_cast<double>(steps()); }
  double time(std::size_t k) const;

  /// Per-grid-point retention alpha(t_k); alpha(t_0) is reported but unused
  /// by abar, which multiplies alpha(t_1) .. alpha(t_k).
  double alpha(std::size_t k) const { return alpha_.at(k); }
  double alpha_bar(std::size_t k) const { return alpha_bar_.at(k); }
  const std::vector<double>& alpha_bar_values() const noexcept { return alpha_bar_; }

  /// abar(t_to) / abar(t_from).
  double retention(std::size_t from, std::size_t to) const;

  /// Finite-difference d/dt ln abar at t_k: central inside, one-sided at the ends.
  double log_alpha_bar_rate(std::size_t k) const;

  /// Maps a time onto the grid; throws if t is not a grid point.
  std::size_t index_of(double t) const;

 private:
  friend NoiseSchedule build_schedule(const struct ScheduleParams& params);
  NoiseSchedule(double tau, std::vector<double> alpha, std::vector<double> alpha_bar);

  double tau_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
};

/// Symmetric cosine schedule with a floor: the per-step retention follows
/// cos^2 over each half of the horizon and is mirrored about tau / 2.
NoiseSchedule build_schedule(const ScheduleParams& params);

struct RateMatrix {
  double t = 0.0;
  Matrix entries;
};

struct TransitionKernel {
  double s = 0.0;
  double t = 0.0;
  Matrix entries;
};

/// r * I + (1 - r) * 1 m^T.
Matrix categorical_kernel(double retention, const Vector& m);

TransitionKernel reference_kernel(const NoiseSchedule& schedule, const Prior& prior,
                                  std::size_t s, std::size_t t);

RateMatrix reference_rate(const NoiseSchedule& schedule, const Prior& prior, std::size_t t);

/// Columns step,t,alpha,alpha_bar at 17 significant digits.
void write_schedule_csv(std::ostream& out, const NoiseSchedule& schedule);

/// A reference Markov process restricted to a time grid. Measures, bridges and
/// solvers work against this interface so that the categorical process and
/// product (graph) processes share one code path.
///
/// Step kernels P_{k:k+1}, the kernels to the horizon P_{k:N} and from the
/// origin P_{0:k} are computed once at construction.
class ReferenceProcess {
 public:
  using KernelFn = std::function<Matrix(std::size_t from, std::size_t to)>;
  using RateFn = std::function<Matrix(std::size_t step)>;

  ReferenceProcess(std::vector<double> times, KernelFn kernel, RateFn rate);

  static ReferenceProcess categorical(const NoiseSchedule& schedule, const Prior& prior);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t steps() const noexcept { return times_.size() - 1; }
  double time(std::size_t k) const { return times_.at(k); }
  double dt(std::size_t k) const { return times_.at(k + 1) - times_.at(k); }
  const std::vector<double>& times() const noexcept { return times_; }

  const Matrix& step_kernel(std::size_t k) const { return step_.at(k); }
  const Matrix& to_end(std::size_t k) const { return to_end_.at(k); }
  const Matrix& from_start(std::size_t k) const { return from_start_.at(k); }

  /// P_{from:to}; throws on from > to.
  Matrix kernel(std::size_t from, std::size_t to) const;
  /// Generator at grid point k.
  Matrix rate(std::size_t k) const;

 private:
  std::vector<double> times_;
  KernelFn kernel_;
  RateFn rate_;
  std::size_t dim_ = 0;
  std::vector<Matrix> step_;
  std::vector<Matrix> to_end_;
  std::vector<Matrix> from_start_;
};

}  // namespace dsb
