#include "dsb/eot_oracle.hpp"

#include <cmath>
#include <limits>

#include "dsb/error.hpp"

namespace dsb {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_distribution(const Vector& p, const char* name) {
  if ((p.array() < 0.0).any() || !p.allFinite()) fail(ErrorKind::invalid_parameter, std::string(name) + " has negative entries");
  if (std::abs(p.sum() - 1.0) > 1e-9) fail(ErrorKind::invalid_parameter, std::string(name) + " must sum to 1");
}

Vector safe_log(const Vector& p) {
  Vector out(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) out(i) = p(i) > 0.0 ? std::log(p(i)) : kNegInf;
  return out;
}

// log sum_j exp(log_k(i, j) + g(j)) for each row i.
Vector row_logsumexp(const Matrix& log_k, const Vector& g) {
  Vector out(log_k.rows());
  for (Eigen::Index i = 0; i < log_k.rows(); ++i) {
    double mx = kNegInf;
    for (Eigen::Index j = 0; j < log_k.cols(); ++j) mx = std::max(mx, log_k(i, j) + g(j));
    if (mx == kNegInf) {
      out(i) = kNegInf;
      continue;
    }
    double s = 0.0;
    for (Eigen::Index j = 0; j < log_k.cols(); ++j) {
      const double v = log_k(i, j) + g(j);
      if (v != kNegInf) s += std::exp(v - mx);
    }
    out(i) = mx + std::log(s);
  }
  return out;
}

Vector potential_update(const Vector& log_marginal, const Vector& lse) {
  Vector out(log_marginal.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (log_marginal(i) == kNegInf) out(i) = kNegInf;
    else if (lse(i) == kNegInf) fail(ErrorKind::support_violation, "marginal mass on a state the kernel cannot reach");
    else out(i) = log_marginal(i) - lse(i);
  }
  return out;
}

}  // namespace

Matrix scaled_kernel(const Matrix& kernel, const Vector& log_u, const Vector& log_v) {
  Matrix out(kernel.rows(), kernel.cols());
  for (Eigen::Index i = 0; i < kernel.rows(); ++i) {
    for (Eigen::Index j = 0; j < kernel.cols(); ++j) {
      const double e = log_u(i) + log_v(j);
      out(i, j) = (kernel(i, j) > 0.0 && e != kNegInf) ? std::exp(std::log(kernel(i, j)) + e) : 0.0;
    }
  }
  return out;
}

SinkhornResult static_sb_sinkhorn(const Vector& gamma, const Vector& xi, const ReferenceProcess& ref,
                                  const SinkhornConfig& cfg) {
  const auto d = static_cast<Eigen::Index>(ref.dim());
  if (gamma.size() != d || xi.size() != d) fail(ErrorKind::size_mismatch, "marginals do not match the reference");
  if (!(cfg.tol_marginal > 0.0)) fail(ErrorKind::invalid_parameter, "tol_marginal must be positive");
  check_distribution(gamma, "gamma");
  check_distribution(xi, "xi");

  const Matrix& kernel = ref.to_end(0);
  const Vector log_gamma = safe_log(gamma);
  const Vector log_xi = safe_log(xi);

  Vector f = Vector::Zero(d);
  Vector g = Vector::Zero(d);
  Matrix pi;
  double err = std::numeric_limits<double>::infinity();
  std::size_t it = 0;

  if (cfg.log_domain) {
    Matrix log_k(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) log_k(i, j) = kernel(i, j) > 0.0 ? std::log(kernel(i, j)) : kNegInf;
    const Matrix log_kt = log_k.transpose();
    for (it = 1; it <= cfg.max_iters; ++it) {
      f = potential_update(log_gamma, row_logsumexp(log_k, g));
      g = potential_update(log_xi, row_logsumexp(log_kt, f));
      pi = scaled_kernel(kernel, f, g);
      err = (pi.rowwise().sum() - gamma).cwiseAbs().sum();
      if (err < cfg.tol_marginal) break;
    }
  } else {
    Vector u = Vector::Ones(d);
    Vector v = Vector::Ones(d);
    for (it = 1; it <= cfg.max_iters; ++it) {
      const Vector kv = kernel * v;
      for (Eigen::Index i = 0; i < d; ++i) u(i) = gamma(i) > 0.0 ? gamma(i) / kv(i) : 0.0;
      const Vector ktu = kernel.transpose() * u;
      for (Eigen::Index j = 0; j < d; ++j) v(j) = xi(j) > 0.0 ? xi(j) / ktu(j) : 0.0;
      pi = u.asDiagonal() * kernel * v.asDiagonal();
      err = (pi.rowwise().sum() - gamma).cwiseAbs().sum();
      if (!std::isfinite(err)) fail(ErrorKind::non_convergence, "linear-domain Sinkhorn overflowed");
      if (err < cfg.tol_marginal) break;
    }
    f = safe_log(u);
    g = safe_log(v);
  }
  const bool converged = err < cfg.tol_marginal;
  const std::size_t iterations = converged ? it : cfg.max_iters;
  return SinkhornResult{Coupling(std::move(pi), 1e-8), f, g, iterations, err, converged};
}

Matrix eot_cost_matrix(const ReferenceProcess& ref) {
  const Matrix& k = ref.to_end(0);
  if ((k.array() <= 0.0).any()) fail(ErrorKind::support_violation, "endpoint kernel has zero entries");
  return -k.array().log().matrix();
}

}  // namespace dsb
