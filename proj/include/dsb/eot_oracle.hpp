#pragma once

// Static Schrodinger bridge as entropic optimal transport: the coupling that
// minimizes KL(pi || Q_{0,tau}) under marginal constraints has the form
// diag(u) P_{0:tau} diag(v). Solved by Sinkhorn scaling, independently of the
// path-space machinery in measures / imf_solver.

#include <cstddef>

#include "dsb/measures.hpp"
#include "dsb/state_process.hpp"

namespace dsb {

struct SinkhornConfig {
  std::size_t max_iters = 100000;
  double tol_marginal = 1e-10;
  bool log_domain = true;
};

struct SinkhornResult {
  Coupling coupling;
  Vector log_u;  // -inf on rows with zero initial mass
  Vector log_v;
  std::size_t iterations = 0;
  double marginal_error = 0.0;  // L1 error of the initial marginal
  bool converged = false;
};

/// Q_0 is taken uniform; any positive Q_0 is absorbed by the scalings.
SinkhornResult static_sb_sinkhorn(const Vector& gamma, const Vector& xi, const ReferenceProcess& ref,
                                  const SinkhornConfig& cfg = {});

/// diag(exp(log_u)) K diag(exp(log_v)), computed in the log domain.
Matrix scaled_kernel(const Matrix& kernel, const Vector& log_u, const Vector& log_v);

/// c(x, y) = -log P_{0:tau}(x, y).
Matrix eot_cost_matrix(const ReferenceProcess& ref);

}  // namespace dsb
