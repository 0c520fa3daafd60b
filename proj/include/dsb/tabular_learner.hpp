#pragma once

// Tabular stand-in for a learned bridge predictor. For every grid step k and
// state x a softmax row q(k, x, .) predicts the far endpoint (X_N for the
// forward direction, X_0 for the backward one). The induced step kernel mixes
// the pinned step kernels of the reference by q, so the exact posterior of the
// current reciprocal measure reproduces its Markov projection.
//
// Losses are expectations over the reciprocal joints, summed exactly:
//
//   L = sum_k (1 / dt_k) sum_{x,z} Lambda_{k,N}(x, z) KL(T_z(x, .) || K_k(x, .))
//
// with T_z the pinned step kernel toward z and K_k the predictor kernel.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include <json.hpp>

#include "dsb/imf_solver.hpp"
#include "dsb/measures.hpp"

namespace dsb {

class TabularPredictor {
 public:
  /// Zero logits: uniform predictions.
  TabularPredictor(std::size_t steps, std::size_t dim);

  /// Logits log q; zero entries become -inf.
  static TabularPredictor from_probabilities(const std::vector<Matrix>& q);

  std::size_t steps() const noexcept { return logits_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  Matrix& logits(std::size_t k) { return logits_.at(k); }
  const Matrix& logits(std::size_t k) const { return logits_.at(k); }

  /// Row-wise softmax of the logits at step k.
  Matrix probabilities(std::size_t k) const;

 private:
  std::size_t dim_;
  std::vector<Matrix> logits_;
};

/// exact_step: the predictor kernel mixes exact pinned step kernels.
/// first_order: it mixes clipped, row-normalized I + dt * pinned rate.
enum class KernelMode { exact_step, first_order };

const char* to_string(KernelMode m) noexcept;
KernelMode kernel_mode_from_string(const std::string& s);

struct TrainConfig {
  double learning_rate = 1e-2;
  std::size_t n_epochs = 5000;
  /// 0 uses the exact coupling; otherwise each step fits an empirical
  /// coupling of this many sampled endpoint pairs.
  std::size_t batch = 0;
  std::uint64_t seed = 0;
  KernelMode kernel = KernelMode::exact_step;
  /// Stop early once the gradient norm drops below this (0 disables).
  double tol_grad = 0.0;
  std::size_t divergence_patience = 10;

  void validate() const;
};

/// Generator row of the predictor at grid point k and state x: the mixture of
/// pinned generators weighted by q(k, x, .). Equivalently
/// A(x, y) (e_y P w) / (e_x P w) with w_z = q_z / P_{k:N}(x, z).
Vector predictor_rate(const TabularPredictor& pred, const ReferenceProcess& ref, std::size_t k, std::size_t x);

struct LossGradient {
  double loss = 0.0;
  std::vector<Matrix> grad;  // d loss / d logits, one matrix per step
  double grad_norm = 0.0;
};

/// Loss, gradient, floor and oracles for one coupling and one direction.
class LearningProblem {
 public:
  LearningProblem(const Coupling& coupling, std::shared_ptr<const ReferenceProcess> reference, Direction direction,
                  KernelMode mode = KernelMode::exact_step);

  Direction direction() const noexcept { return direction_; }
  std::size_t steps() const noexcept { return slices_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const ReciprocalMeasure& reciprocal() const noexcept { return rec_; }

  double loss(const TabularPredictor& pred) const;

  /// The part of the loss that depends on the logits of step k, state x
  /// (the loss is a sum of such row terms plus a constant).
  double row_loss(std::size_t k, std::size_t x, const Eigen::RowVectorXd& logits) const;
  LossGradient loss_and_gradient(const TabularPredictor& pred) const;

  /// Infimum of the loss over all kernels row-supported by the basis; attained
  /// by the exact posterior in exact_step mode.
  double floor() const;

  /// Posterior of the far endpoint under the reciprocal measure; uniform on
  /// rows the measure never visits.
  TabularPredictor exact_posterior() const;

  /// Forward: K_k(x, y). Backward: reversed kernels R_k(y, x).
  std::vector<Matrix> predictor_kernels(const TabularPredictor& pred) const;

  /// Max abs difference to the exact Markov projection over visited rows.
  double kernel_error(const TabularPredictor& pred) const;

  /// Endpoint coupling of the Markov measure the predictor induces, started
  /// from the coupling's initial law (forward) or terminal law (backward).
  Coupling induced_coupling(const TabularPredictor& pred) const;
  /// Same, started from the given law of X_0 (forward) or X_N (backward).
  Coupling induced_coupling(const TabularPredictor& pred, const Vector& start) const;

 private:
  struct Slice {
    double inv_dt = 0.0;
    double entropy = 0.0;      // sum Lambda T log T
    Matrix joint;              // Lambda(x, z): state and far endpoint
    Matrix weight;             // C(x, y) = sum_z Lambda(x, z) T_z(x, y)
    Vector mass;               // row sums of Lambda
    std::vector<Matrix> basis; // basis[z](x, y)
  };

  Matrix mixture(const Slice& s, const Matrix& q) const;

  ReciprocalMeasure rec_;
  Direction direction_;
  KernelMode mode_;
  std::size_t dim_;
  std::vector<Slice> slices_;
};

double forward_loss(const TabularPredictor& pred, const Coupling& coupling,
                    std::shared_ptr<const ReferenceProcess> reference, KernelMode mode = KernelMode::exact_step);
double backward_loss(const TabularPredictor& pred, const Coupling& coupling,
                     std::shared_ptr<const ReferenceProcess> reference, KernelMode mode = KernelMode::exact_step);

struct LossPoint {
  std::size_t step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct TrainResult {
  TabularPredictor predictor;
  std::vector<LossPoint> curve;  // entry i is measured before update i
  bool diverged = false;
  double kernel_error = 0.0;
};

TrainResult train(TabularPredictor pred, const Coupling& coupling, std::shared_ptr<const ReferenceProcess> reference,
                  const TrainConfig& cfg, Direction direction);

struct GradientCheck {
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
  double max_abs_gradient = 0.0;
};

/// Central differences with step h on random logit coordinates. Each
/// difference is taken on the row term the coordinate enters, which avoids
/// cancellation against the rest of the loss. Relative error is
/// |a - f| / max(|a|, |f|, floor_scale * max |gradient|).
GradientCheck gradient_check(const TabularPredictor& pred, const LearningProblem& problem, std::size_t n_coords,
                             double h, std::uint64_t seed, double floor_scale = 1e-6);

struct ApproxImfRecord {
  std::size_t iteration = 0;
  Direction direction = Direction::forward;
  double final_loss = 0.0;
  double floor = 0.0;
  double kernel_error = 0.0;
  double tv_to_oracle = 0.0;
  double initial_marginal_tv = 0.0;
  double terminal_marginal_tv = 0.0;
};

struct ApproxImfResult {
  Coupling coupling;
  std::vector<ApproxImfRecord> trace;
};

struct ApproxImfConfig {
  TrainConfig train;
  std::size_t n_outer = 6;
  bool alternate_direction = true;
  /// Start every inner fit at the exact posterior of the current iterate.
  bool exact_init = false;
};

/// Alternating forward and backward fits with reciprocal projections between
/// them, starting from the independent coupling. Forward fits start their
/// chain from gamma and backward fits from xi, so each side keeps its data
/// marginal exactly.
ApproxImfResult approximate_imf(const Vector& gamma, const Vector& xi, std::shared_ptr<const ReferenceProcess> reference,
                                const ApproxImfConfig& cfg, const Coupling& oracle);

/// Columns step,loss,grad_norm.
void write_loss_curve_csv(std::ostream& out, const std::vector<LossPoint>& curve);

/// {"steps", "dim", "logits": [[[...]]]}; -inf logits are written as null.
nlohmann::ordered_json predictor_to_json(const TabularPredictor& pred);
TabularPredictor predictor_from_json(const nlohmann::json& j);

}  // namespace dsb
