#pragma once

// Path measures on the time grid and the two projections used by iterative
// Markovian fitting.
//
// A reciprocal measure is a coupling pi over (X_0, X_N) with reference
// bridges in between. A Markov measure is an initial law plus one transition
// kernel per grid interval. Projections and KL divergences reduce to finite
// sums over the grid, so every identity below can be checked exactly.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <memory>
#include <vector>

#include "dsb/state_process.hpp"

namespace dsb {

/// Joint law of (X_0, X_tau).
class Coupling {
 public:
  explicit Coupling(Matrix joint, double tol = 1e-12);

  static Coupling independent(const Vector& gamma, const Vector& xi);

  const Matrix& matrix() const noexcept { return p_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(p_.rows()); }
  Vector initial_marginal() const { return p_.rowwise().sum(); }
  Vector terminal_marginal() const { return p_.colwise().sum().transpose(); }
  double operator()(std::size_t x0, std::size_t z) const {
    return p_(static_cast<Eigen::Index>(x0), static_cast<Eigen::Index>(z));
  }

 private:
  Matrix p_;
};

/// Mixture of reference bridges indexed by a coupling.
class ReciprocalMeasure {
 public:
  ReciprocalMeasure(Coupling coupling, std::shared_ptr<const ReferenceProcess> reference);

  const Coupling& coupling() const noexcept { return coupling_; }
  const ReferenceProcess& reference() const noexcept { return *reference_; }
  const std::shared_ptr<const ReferenceProcess>& reference_handle() const noexcept { return reference_; }

  /// pi / P_{0:N} elementwise (zero off the support).
  const Matrix& bridge_weights() const noexcept { return weights_; }

 private:
  Coupling coupling_;
  std::shared_ptr<const ReferenceProcess> reference_;
  Matrix weights_;
};

struct MarkovChainMeasure {
  Vector init;
  std::vector<Matrix> kernels;  // kernels[k] = P(X_{k+1} = y | X_k = x)

  std::size_t steps() const noexcept { return kernels.size(); }
  Vector marginal(std::size_t k) const;
  std::vector<Vector> marginals() const;
  Coupling endpoint_coupling() const;
};

/// Markov measure stored in reversed time: the law of X_N plus
/// reversed[k](y, x) = P(X_k = x | X_{k+1} = y).
struct BackwardMarkovChainMeasure {
  Vector terminal;
  std::vector<Matrix> reversed;

  std::size_t steps() const noexcept { return reversed.size(); }
  Vector marginal(std::size_t k) const;
  Coupling endpoint_coupling() const;
  /// Same path law written forward in time.
  MarkovChainMeasure to_forward() const;
};

/// Joint law of (X_k, X_N) under the reciprocal measure.
Matrix reciprocal_joint(const ReciprocalMeasure& rec, std::size_t k);
/// Joint law of (X_0, X_k) under the reciprocal measure.
Matrix reciprocal_joint_initial(const ReciprocalMeasure& rec, std::size_t k);
Vector reciprocal_marginal(const ReciprocalMeasure& rec, std::size_t k);

/// Forward Markov projection: kernels mix pinned step kernels by the
/// posterior of X_N given X_k. Preserves every time marginal.
MarkovChainMeasure markov_projection(const ReciprocalMeasure& rec);

/// Time-reversed Markov projection: reversed kernels mix backward pinned
/// kernels (the reference conditioned on X_0) by the posterior of X_0 given
/// X_{k+1}.
BackwardMarkovChainMeasure markov_projection_reverse(const ReciprocalMeasure& rec);

ReciprocalMeasure reciprocal_projection(const MarkovChainMeasure& m,
                                        std::shared_ptr<const ReferenceProcess> reference);
ReciprocalMeasure reciprocal_projection(const BackwardMarkovChainMeasure& m,
                                        std::shared_ptr<const ReferenceProcess> reference);

/// The reference started from init, as a Markov measure.
MarkovChainMeasure reference_chain(const ReferenceProcess& ref, const Vector& init);

/// sum a log(a / b) with 0 log 0 = 0. Returns +inf when a charges a cell b does not.
double kl_couplings(const Coupling& a, const Coupling& b);
double kl_vectors(const Vector& a, const Vector& b);

/// Path-space KL between Markov measures on the grid:
/// KL(a_0 || b_0) + sum_k sum_x a_k(x) KL(K^a_k(x, .) || K^b_k(x, .)).
double kl_markov_paths(const MarkovChainMeasure& a, const MarkovChainMeasure& b);

/// KL(Lambda || M) for reciprocal Lambda and Markov M, by disintegrating on
/// X_0: conditioned on its start, Lambda is Markov with kernels that mix
/// pinned kernels by the posterior of X_N given (X_0, X_k).
double kl_reciprocal_to_markov(const ReciprocalMeasure& rec, const MarkovChainMeasure& m);

/// Kernels of Lambda conditioned on X_0 = x0.
MarkovChainMeasure conditioned_on_start(const ReciprocalMeasure& rec, std::size_t x0);

double total_variation(const Matrix& a, const Matrix& b);
double total_variation(const Vector& a, const Vector& b);

/// CSV matrix with a header row of labels and the row label in the first column.
void write_matrix_csv(std::ostream& out, const Matrix& m, const StateSpace& space);
void write_coupling_csv(std::ostream& out, const Coupling& c, const StateSpace& space);

struct LabeledMatrix {
  std::vector<std::string> labels;
  Matrix values;
};
LabeledMatrix read_matrix_csv(std::istream& in);
Coupling read_coupling_csv(std::istream& in, const StateSpace& space);

/// Marginal CSV: header label,probability then one row per state.
struct LabeledVector {
  std::vector<std::string> labels;
  Vector values;
};
LabeledVector read_marginal_csv(std::istream& in);
void write_marginal_csv(std::ostream& out, const Vector& p, const StateSpace& space);

/// One CSV per step plus index.json listing the files and the initial law.
void write_markov_chain(const std::filesystem::path& dir, const MarkovChainMeasure& m,
                        const StateSpace& space);

}  // namespace dsb
