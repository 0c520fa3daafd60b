#pragma once

// Doob h-transform of the reference process: the process conditioned on
// X_tau = z is again Markov, with kernel
//
//   P_{s:t}(x, y; z) = P_{s:t}(x, y) P_{t:tau}(y, z) / P_{s:tau}(x, z)
//
// and generator A_s(x, y) P_{s:tau}(y, z) / P_{s:tau}(x, z) off the diagonal.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dsb/random.hpp"
#include "dsb/state_process.hpp"

namespace dsb {

struct PinnedKernel {
  double s = 0.0;
  double t = 0.0;
  std::size_t endpoint = 0;
  Matrix entries;
};

/// Piecewise-constant path. states has one more entry than times; times[i]
/// is the instant the path enters states[i + 1].
struct JumpPath {
  std::vector<double> times;
  std::vector<std::size_t> states;

  std::size_t start() const { return states.front(); }
  std::size_t end() const { return states.back(); }
  std::size_t jumps() const noexcept { return times.size(); }
};

PinnedKernel pinned_kernel(const ReferenceProcess& ref, std::size_t s, std::size_t t, std::size_t z);
PinnedKernel pinned_kernel(const NoiseSchedule& schedule, const Prior& prior, std::size_t s,
                           std::size_t t, std::size_t z);

RateMatrix pinned_rate(const ReferenceProcess& ref, std::size_t s, std::size_t z);
RateMatrix pinned_rate(const NoiseSchedule& schedule, const Prior& prior, std::size_t s, std::size_t z);

/// Law of X_k under the bridge from x0 to z.
Vector bridge_marginal(const ReferenceProcess& ref, std::size_t x0, std::size_t z, std::size_t k);

/// Samples bridges toward a fixed endpoint; pinned step kernels are built once.
class BridgeSampler {
 public:
  BridgeSampler(const ReferenceProcess& ref, std::size_t z);

  JumpPath sample(std::size_t x0, Rng& rng) const;

  /// Grid-resolution trajectory (one state per grid point).
  std::vector<std::size_t> sample_states(std::size_t x0, Rng& rng) const;

 private:
  std::vector<double> times_;
  std::size_t endpoint_;
  std::vector<Matrix> steps_;
};

/// Collapses a grid trajectory into jumps; a change between grid points k - 1
/// and k is recorded at times[k].
JumpPath to_jump_path(const std::vector<std::size_t>& grid, const std::vector<double>& times);

JumpPath sample_bridge_path(const ReferenceProcess& ref, std::size_t x0, std::size_t z,
                            std::uint64_t seed);

/// Rows t,state_label; the first row is the start state at t = 0, the last
/// repeats the end state at the horizon.
void write_path_csv(std::ostream& out, const JumpPath& path, const StateSpace& space, double horizon);

}  // namespace dsb
