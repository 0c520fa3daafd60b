#include "dsb/bridge.hpp"

#include <ostream>

#include "dsb/error.hpp"
#include "dsb/io.hpp"

namespace dsb {
namespace {

void check_endpoint(const ReferenceProcess& ref, std::size_t s, std::size_t z) {
  if (z >= ref.dim()) fail(ErrorKind::invalid_parameter, "endpoint out of range");
  if (s > ref.steps()) fail(ErrorKind::invalid_parameter, "grid index out of range");
  const auto& to_end = ref.to_end(s);
  for (Eigen::Index x = 0; x < to_end.rows(); ++x) {
    if (!(to_end(x, static_cast<Eigen::Index>(z)) > 0.0)) {
      fail(ErrorKind::degenerate_bridge, "endpoint " + std::to_string(z) + " unreachable from state " +
                                             std::to_string(x) + " at step " + std::to_string(s));
    }
  }
}

}  // namespace

PinnedKernel pinned_kernel(const ReferenceProcess& ref, std::size_t s, std::size_t t, std::size_t z) {
  if (t < s) fail(ErrorKind::time_order, "pinned_kernel requires s <= t");
  check_endpoint(ref, s, z);
  const auto zi = static_cast<Eigen::Index>(z);
  const Matrix forward = ref.kernel(s, t);
  const Vector h_t = ref.to_end(t).col(zi);
  const Vector h_s = ref.to_end(s).col(zi);
  Matrix entries = forward * h_t.asDiagonal();
  entries = h_s.cwiseInverse().asDiagonal() * entries;
  return {ref.time(s), ref.time(t), z, std::move(entries)};
}

PinnedKernel pinned_kernel(const NoiseSchedule& schedule, const Prior& prior, std::size_t s,
                           std::size_t t, std::size_t z) {
  return pinned_kernel(ReferenceProcess::categorical(schedule, prior), s, t, z);
}

RateMatrix pinned_rate(const ReferenceProcess& ref, std::size_t s, std::size_t z) {
  check_endpoint(ref, s, z);
  const Vector h = ref.to_end(s).col(static_cast<Eigen::Index>(z));
  const Matrix base = ref.rate(s);
  Matrix a = h.cwiseInverse().asDiagonal() * base * h.asDiagonal();
  a.diagonal().setZero();
  a.diagonal() = -a.rowwise().sum();
  return {ref.time(s), std::move(a)};
}

RateMatrix pinned_rate(const NoiseSchedule& schedule, const Prior& prior, std::size_t s, std::size_t z) {
  return pinned_rate(ReferenceProcess::categorical(schedule, prior), s, z);
}

Vector bridge_marginal(const ReferenceProcess& ref, std::size_t x0, std::size_t z, std::size_t k) {
  if (x0 >= ref.dim() || z >= ref.dim()) fail(ErrorKind::invalid_parameter, "state out of range");
  const auto xi = static_cast<Eigen::Index>(x0);
  const auto zi = static_cast<Eigen::Index>(z);
  const double norm = ref.to_end(0)(xi, zi);
  if (!(norm > 0.0)) fail(ErrorKind::degenerate_bridge, "endpoint unreachable from start");
  Vector out = ref.from_start(k).row(xi).transpose().cwiseProduct(ref.to_end(k).col(zi));
  return out / norm;
}

BridgeSampler::BridgeSampler(const ReferenceProcess& ref, std::size_t z)
    : times_(ref.times()), endpoint_(z) {
  steps_.reserve(ref.steps());
  for (std::size_t k = 0; k < ref.steps(); ++k) {
    const auto zi = static_cast<Eigen::Index>(z);
    const Vector h_next = ref.to_end(k + 1).col(zi);
    const Vector h_now = ref.to_end(k).col(zi);
    Matrix step = ref.step_kernel(k) * h_next.asDiagonal();
    // Rows for states that cannot reach z are never visited; leave them zero.
    for (Eigen::Index x = 0; x < step.rows(); ++x) {
      if (h_now(x) > 0.0) step.row(x) /= h_now(x);
      else step.row(x).setZero();
    }
    steps_.push_back(std::move(step));
  }
}

std::vector<std::size_t> BridgeSampler::sample_states(std::size_t x0, Rng& rng) const {
  std::vector<std::size_t> states;
  states.reserve(steps_.size() + 1);
  states.push_back(x0);
  std::size_t x = x0;
  std::vector<double> row;
  for (const auto& step : steps_) {
    const auto xi = static_cast<Eigen::Index>(x);
    if (step.row(xi).sum() <= 0.0) fail(ErrorKind::degenerate_bridge, "bridge left the support of its endpoint");
    row.resize(static_cast<std::size_t>(step.cols()));
    for (Eigen::Index y = 0; y < step.cols(); ++y) row[static_cast<std::size_t>(y)] = step(xi, y);
    x = rng.categorical(row);
    states.push_back(x);
  }
  return states;
}

JumpPath to_jump_path(const std::vector<std::size_t>& grid, const std::vector<double>& times) {
  if (grid.empty() || grid.size() != times.size()) fail(ErrorKind::size_mismatch, "grid path and times differ in length");
  JumpPath path;
  path.states.push_back(grid.front());
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (grid[k] != grid[k - 1]) {
      path.times.push_back(times[k]);
      path.states.push_back(grid[k]);
    }
  }
  return path;
}

JumpPath BridgeSampler::sample(std::size_t x0, Rng& rng) const {
  JumpPath path = to_jump_path(sample_states(x0, rng), times_);
  if (path.end() != endpoint_) fail(ErrorKind::degenerate_bridge, "sampled bridge missed its endpoint");
  return path;
}

JumpPath sample_bridge_path(const ReferenceProcess& ref, std::size_t x0, std::size_t z, std::uint64_t seed) {
  check_endpoint(ref, 0, z);
  Rng rng(seed);
  return BridgeSampler(ref, z).sample(x0, rng);
}

void write_path_csv(std::ostream& out, const JumpPath& path, const StateSpace& space, double horizon) {
  out << "t,state_label\n";
  out << io::format_double(0.0) << ',' << space.label(path.start()) << '\n';
  for (std::size_t i = 0; i < path.times.size(); ++i) {
    out << io::format_double(path.times[i]) << ',' << space.label(path.states[i + 1]) << '\n';
  }
  out << io::format_double(horizon) << ',' << space.label(path.end()) << '\n';
}

}  // namespace dsb
