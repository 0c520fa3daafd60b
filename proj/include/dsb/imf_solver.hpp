#pragma once

// Iterative Markovian fitting: alternate Markov projection (forward or
// time-reversed) and reciprocal projection, starting from a coupling with the
// prescribed marginals. The fixed point is the Schrodinger bridge.

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dsb/measures.hpp"

namespace dsb {

enum class Direction { forward, backward };

const char* to_string(Direction d) noexcept;

struct ImfConfig {
  std::size_t max_iters = 50;
  double tol_coupling_tv = 1e-12;
  bool alternate_direction = true;
  bool log_kl_to_oracle = true;
};

struct ImfRecord {
  std::size_t iteration = 0;
  Direction direction = Direction::forward;
  double tv_change = 0.0;
  double kl_to_oracle = 0.0;  // NaN when not logged
  double path_kl = 0.0;       // KL(Lambda^(n-1) || M^(n))
  double marginal_error = 0.0;  // max TV of the two endpoint marginals to (gamma, xi)
};

struct ImfTrace {
  std::size_t n_steps = 0;
  double initial_kl_to_oracle = 0.0;
  std::vector<ImfRecord> records;
};

struct ImfResult {
  Coupling coupling;
  MarkovChainMeasure markov;  // last Markov projection, written forward in time
  ImfTrace trace;
  bool converged = false;
};

/// Requires initial to have marginals (gamma, xi) within 1e-9 and finite
/// KL to Q_{0,tau}. When the oracle is omitted but KL logging is on, the
/// Sinkhorn coupling is computed internally.
ImfResult run_imf(const Vector& gamma, const Vector& xi, const Coupling& initial,
                  std::shared_ptr<const ReferenceProcess> reference, const ImfConfig& cfg,
                  const std::optional<Coupling>& oracle = std::nullopt);

struct ImfReport {
  bool monotone = true;
  std::vector<std::size_t> violations;  // iterations whose KL rose by more than the slack
  bool coarse_grid = false;
  std::string table;
};

/// Grids with fewer steps than this are flagged in diagnostics.
inline constexpr std::size_t kCoarseGridSteps = 20;

ImfReport imf_diagnostics(const ImfTrace& trace, double slack = 1e-10);

/// Columns iteration,direction,tv_change,kl_to_oracle,path_kl.
void write_trace_csv(std::ostream& out, const ImfTrace& trace);

}  // namespace dsb
