#include "dsb/imf_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "dsb/eot_oracle.hpp"
#include "dsb/error.hpp"
#include "dsb/io.hpp"

namespace dsb {

const char* to_string(Direction d) noexcept { return d == Direction::forward ? "forward" : "backward"; }

ImfResult run_imf(const Vector& gamma, const Vector& xi, const Coupling& initial,
                  std::shared_ptr<const ReferenceProcess> reference, const ImfConfig& cfg,
                  const std::optional<Coupling>& oracle) {
  if (!reference) fail(ErrorKind::invalid_parameter, "run_imf needs a reference process");
  if (cfg.max_iters < 1) fail(ErrorKind::invalid_parameter, "max_iters must be at least 1");
  if (!(cfg.tol_coupling_tv > 0.0)) fail(ErrorKind::invalid_parameter, "tol_coupling_tv must be positive");
  if (total_variation(initial.initial_marginal(), gamma) * 2.0 > 1e-9 ||
      total_variation(initial.terminal_marginal(), xi) * 2.0 > 1e-9) {
    fail(ErrorKind::invalid_parameter, "initial coupling does not have the prescribed marginals");
  }

  std::optional<Coupling> target = oracle;
  if (cfg.log_kl_to_oracle && !target) target = static_sb_sinkhorn(gamma, xi, *reference).coupling;

  const double nan = std::numeric_limits<double>::quiet_NaN();
  ReciprocalMeasure current(initial, reference);  // support violations surface here

  ImfTrace trace;
  trace.n_steps = reference->steps();
  trace.initial_kl_to_oracle = target ? kl_couplings(initial, *target) : nan;

  MarkovChainMeasure markov;
  bool converged = false;
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    const Direction dir = (cfg.alternate_direction && it % 2 == 0) ? Direction::backward : Direction::forward;
    if (dir == Direction::forward) {
      markov = markov_projection(current);
    } else {
      markov = markov_projection_reverse(current).to_forward();
    }
    ImfRecord rec;
    rec.iteration = it;
    rec.direction = dir;
    rec.path_kl = kl_reciprocal_to_markov(current, markov);

    ReciprocalMeasure next = reciprocal_projection(markov, reference);
    rec.tv_change = total_variation(next.coupling().matrix(), current.coupling().matrix());
    rec.kl_to_oracle = target ? kl_couplings(next.coupling(), *target) : nan;
    rec.marginal_error = std::max(total_variation(next.coupling().initial_marginal(), gamma),
                                  total_variation(next.coupling().terminal_marginal(), xi));
    trace.records.push_back(rec);
    current = std::move(next);
    if (rec.tv_change < cfg.tol_coupling_tv) {
      converged = true;
      break;
    }
  }
  return ImfResult{current.coupling(), std::move(markov), std::move(trace), converged};
}

ImfReport imf_diagnostics(const ImfTrace& trace, double slack) {
  if (trace.records.empty()) fail(ErrorKind::invalid_parameter, "trace is empty");
  ImfReport report;
  report.coarse_grid = trace.n_steps < kCoarseGridSteps;
  std::ostringstream table;
  table << "iteration  direction  tv_change                kl_to_oracle             path_kl\n";
  double prev = trace.initial_kl_to_oracle;
  for (const auto& r : trace.records) {
    if (std::isnan(r.kl_to_oracle)) fail(ErrorKind::invalid_parameter, "trace has no oracle KL logged");
    if (!std::isnan(prev) && r.kl_to_oracle > prev + slack) {
      report.monotone = false;
      report.violations.push_back(r.iteration);
    }
    prev = r.kl_to_oracle;
    char line[160];
    std::snprintf(line, sizeof(line), "%9zu  %-9s  %-23.17g  %-23.17g  %.17g\n", r.iteration, to_string(r.direction),
                  r.tv_change, r.kl_to_oracle, r.path_kl);
    table << line;
  }
  if (!report.monotone) {
    table << "KL to oracle increased at " << report.violations.size() << " iteration(s)";
    if (report.coarse_grid) table << "; grid has only " << trace.n_steps << " steps, refine the time grid";
    table << '\n';
  } else if (report.coarse_grid) {
    table << "note: coarse grid (" << trace.n_steps << " steps)\n";
  }
  report.table = table.str();
  return report;
}

void write_trace_csv(std::ostream& out, const ImfTrace& trace) {
  out << "iteration,direction,tv_change,kl_to_oracle,path_kl\n";
  for (const auto& r : trace.records) {
    out << r.iteration << ',' << to_string(r.direction) << ',' << io::format_double(r.tv_change) << ','
        << io::format_double(r.kl_to_oracle) << ',' << io::format_double(r.path_kl) << '\n';
  }
}

}  // namespace dsb
