#include "dsb/state_process.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <set>

#include "dsb/error.hpp"
#include "dsb/io.hpp"

namespace dsb {

StateSpace::StateSpace(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.size() < 2) fail(ErrorKind::invalid_parameter, "state space needs at least two labels");
  std::set<std::string> seen(labels_.begin(), labels_.end());
  if (seen.size() != labels_.size()) fail(ErrorKind::invalid_parameter, "state labels must be distinct");
}

StateSpace StateSpace::numbered(std::size_t d) {
  std::vector<std::string> labels;
  labels.reserve(d);
  for (std::size_t i = 0; i < d; ++i) labels.push_back(std::to_string(i));
  return StateSpace(std::move(labels));
}

std::size_t StateSpace::index_of(std::string_view label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) fail(ErrorKind::invalid_parameter, "unknown state label '" + std::string(label) + "'");
  return static_cast<std::size_t>(it - labels_.begin());
}

Prior::Prior(Vector m) : m_(std::move(m)) {
  if (m_.size() < 2) fail(ErrorKind::invalid_parameter, "prior needs at least two entries");
  if ((m_.array() <= 0.0).any()) fail(ErrorKind::invalid_parameter, "prior entries must be strictly positive");
  if (std::abs(m_.sum() - 1.0) > 1e-12) fail(ErrorKind::invalid_parameter, "prior must sum to 1");
}

Prior Prior::uniform(std::size_t d) {
  return Prior(Vector::Constant(static_cast<Eigen::Index>(d), 1.0 / static_cast<double>(d)));
}

bool Prior::is_uniform(double tol) const {
  const double u = 1.0 / static_cast<double>(m_.size());
  return ((m_.array() - u).abs() <= tol).all();
}

NoiseSchedule::NoiseSchedule(double tau, std::vector<double> alpha, std::vector<double> alpha_bar)
    : tau_(tau), alpha_(std::move(alpha)), alpha_bar_(std::move(alpha_bar)) {}

NoiseSchedule NoiseSchedule::from_alpha_bar(double tau, std::vector<double> alpha_bar) {
  if (!(tau > 0.0)) fail(ErrorKind::invalid_parameter, "tau must be positive");
  if (alpha_bar.size() < 3) fail(ErrorKind::invalid_parameter, "schedule needs at least two steps");
  if (alpha_bar.front() != 1.0) fail(ErrorKind::invalid_parameter, "abar(0) must equal 1");
  std::vector<double> alpha(alpha_bar.size(), 1.0);
  for (std::size_t k = 1; k < alpha_bar.size(); ++k) {
    if (!(alpha_bar[k] > 0.0)) fail(ErrorKind::invalid_parameter, "abar must be strictly positive");
    if (alpha_bar[k] > alpha_bar[k - 1]) fail(ErrorKind::invalid_parameter, "abar must be non-increasing");
    alpha[k] = alpha_bar[k] / alpha_bar[k - 1];
  }
  return NoiseSchedule(tau, std::move(alpha), std::move(alpha_bar));
}

NoiseSchedule NoiseSchedule::sample(double tau, std::size_t n_steps,
                                    const std::function<double(double)>& alpha_bar) {
  if (n_steps < 2) fail(ErrorKind::invalid_parameter, "n_steps must be at least 2");
  std::vector<double> values(n_steps + 1);
  values[0] = 1.0;
  for (std::size_t k = 1; k <= n_steps; ++k) {
    values[k] = alpha_bar(tau * static_cast<double>(k) / static_cast<double>(n_steps));
  }
  return from_alpha_bar(tau, std::move(values));
}

double NoiseSchedule::time(std::size_t k) const {
  if (k > steps()) fail(ErrorKind::invalid_parameter, "grid index out of range");
  return tau_ * static_cast<double>(k) / static_cast<double>(steps());
}

double NoiseSchedule::retention(std::size_t from, std::size_t to) const {
  if (to < from) fail(ErrorKind::time_order, "kernel requested backwards in time");
  return alpha_bar_.at(to) / alpha_bar_.at(from);
}

double NoiseSchedule::log_alpha_bar_rate(std::size_t k) const {
  const std::size_t n = steps();
  if (k > n) fail(ErrorKind::invalid_parameter, "grid index out of range");
  const std::size_t lo = k == 0 ? 0 : k - 1;
  const std::size_t hi = k == n ? n : k + 1;
  return (std::log(alpha_bar_[hi]) - std::log(alpha_bar_[lo])) / (static_cast<double>(hi - lo) * dt());
}

std::size_t NoiseSchedule::index_of(double t) const {
  const double pos = t / dt();
  const double rounded = std::round(pos);
  if (rounded < 0.0 || rounded > static_cast<double>(steps()) || std::abs(pos - rounded) > 1e-9) {
    fail(ErrorKind::invalid_parameter, "time " + io::format_double(t) + " is not on the grid");
  }
  return static_cast<std::size_t>(rounded);
}

NoiseSchedule build_schedule(const ScheduleParams& p) {
  if (p.n_steps < 2) fail(ErrorKind::invalid_parameter, "n_steps must be at least 2");
  if (!(p.alpha_min > 0.0 && p.alpha_min < 1.0)) fail(ErrorKind::invalid_parameter, "alpha_min must lie in (0, 1)");
  if (!(p.tau > 0.0)) fail(ErrorKind::invalid_parameter, "tau must be positive");
  if (!(p.s_offset >= 0.0)) fail(ErrorKind::invalid_parameter, "s_offset must be non-negative");

  const std::size_t n = p.n_steps;
  std::vector<double> alpha(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    // Mirror about the midpoint, then stretch each half to a full quarter period.
    const std::size_t mirrored = std::min(k, n - k);
    const double half_pos = 2.0 * static_cast<double>(mirrored) / static_cast<double>(n);
    const double c = std::cos((half_pos + p.s_offset) / (1.0 + p.s_offset) * std::numbers::pi / 2.0);
    alpha[k] = c * c * (1.0 - p.alpha_min) + p.alpha_min;
  }
  std::vector<double> alpha_bar(n + 1, 1.0);
  for (std::size_t k = 1; k <= n; ++k) alpha_bar[k] = alpha_bar[k - 1] * alpha[k];
  return NoiseSchedule(p.tau, std::move(alpha), std::move(alpha_bar));
}

Matrix categorical_kernel(double retention, const Vector& m) {
  const auto d = m.size();
  Matrix k = (1.0 - retention) * Vector::Ones(d) * m.transpose();
  k.diagonal().array() += retention;
  return k;
}

TransitionKernel reference_kernel(const NoiseSchedule& schedule, const Prior& prior,
                                  std::size_t s, std::size_t t) {
  if (t < s) fail(ErrorKind::time_order, "reference_kernel requires s <= t");
  return {schedule.time(s), schedule.time(t),
          categorical_kernel(schedule.retention(s, t), prior.probabilities())};
}

RateMatrix reference_rate(const NoiseSchedule& schedule, const Prior& prior, std::size_t t) {
  const double lam = schedule.log_alpha_bar_rate(t);
  const auto d = static_cast<Eigen::Index>(prior.size());
  Matrix a = -lam * Vector::Ones(d) * prior.probabilities().transpose();
  a.diagonal().array() += lam;
  return {schedule.time(t), std::move(a)};
}

void write_schedule_csv(std::ostream& out, const NoiseSchedule& schedule) {
  out << "step,t,alpha,alpha_bar\n";
  for (std::size_t k = 0; k <= schedule.steps(); ++k) {
    out << k << ',' << io::format_double(schedule.time(k)) << ',' << io::format_double(schedule.alpha(k))
        << ',' << io::format_double(schedule.alpha_bar(k)) << '\n';
  }
}

ReferenceProcess::ReferenceProcess(std::vector<double> times, KernelFn kernel, RateFn rate)
    : times_(std::move(times)), kernel_(std::move(kernel)), rate_(std::move(rate)) {
  if (times_.size() < 2) fail(ErrorKind::invalid_parameter, "reference process needs a time grid");
  const std::size_t n = steps();
  step_.reserve(n);
  to_end_.reserve(n + 1);
  from_start_.reserve(n + 1);
  for (std::size_t k = 0; k < n; ++k) step_.push_back(kernel_(k, k + 1));
  for (std::size_t k = 0; k <= n; ++k) {
    to_end_.push_back(kernel_(k, n));
    from_start_.push_back(kernel_(0, k));
  }
  dim_ = static_cast<std::size_t>(step_.front().rows());
}

ReferenceProcess ReferenceProcess::categorical(const NoiseSchedule& schedule, const Prior& prior) {
  std::vector<double> times(schedule.steps() + 1);
  for (std::size_t k = 0; k <= schedule.steps(); ++k) times[k] = schedule.time(k);
  auto kernel = [schedule, prior](std::size_t s, std::size_t t) {
    return reference_kernel(schedule, prior, s, t).entries;
  };
  auto rate = [schedule, prior](std::size_t k) { return reference_rate(schedule, prior, k).entries; };
  return ReferenceProcess(std::move(times), std::move(kernel), std::move(rate));
}

Matrix ReferenceProcess::kernel(std::size_t from, std::size_t to) const {
  if (to < from) fail(ErrorKind::time_order, "kernel requested backwards in time");
  if (to > steps()) fail(ErrorKind::invalid_parameter, "grid index out of range");
  return kernel_(from, to);
}

Matrix ReferenceProcess::rate(std::size_t k) const {
  if (!rate_) fail(ErrorKind::invalid_parameter, "reference process has no generator");
  if (k > steps()) fail(ErrorKind::invalid_parameter, "grid index out of range");
  return rate_(k);
}

}  // namespace dsb
