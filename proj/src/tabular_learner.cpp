#include "dsb/tabular_learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "dsb/error.hpp"
#include "dsb/io.hpp"
#include "dsb/random.hpp"

namespace dsb {
namespace {

using Idx = Eigen::Index;

Idx ix(std::size_t i) { return static_cast<Idx>(i); }
std::size_t ix_to(Idx i) { return static_cast<std::size_t>(i); }

constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix softmax_rows(const Matrix& logits) {
  Matrix q(logits.rows(), logits.cols());
  for (Idx x = 0; x < logits.rows(); ++x) {
    const double m = logits.row(x).maxCoeff();
    if (!std::isfinite(m)) fail(ErrorKind::invalid_parameter, "predictor row has no finite logit");
    double total = 0.0;
    for (Idx z = 0; z < logits.cols(); ++z) {
      q(x, z) = std::exp(logits(x, z) - m);
      total += q(x, z);
    }
    q.row(x) /= total;
  }
  return q;
}

// Clip negative entries and renormalize each row.
Matrix clip_rows(Matrix m) {
  m = m.cwiseMax(0.0);
  for (Idx x = 0; x < m.rows(); ++x) m.row(x) /= m.row(x).sum();
  return m;
}

Coupling sample_empirical(const Coupling& c, std::size_t batch, Rng& rng) {
  const std::size_t d = c.dim();
  std::vector<double> flat(d * d);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) flat[a * d + b] = c(a, b);
  }
  Matrix counts = Matrix::Zero(ix(d), ix(d));
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t cell = rng.categorical(flat);
    counts(ix(cell / d), ix(cell % d)) += 1.0;
  }
  return Coupling(counts / static_cast<double>(batch), 1e-9);
}

TrainResult train_on(TabularPredictor pred, const LearningProblem& full, const Coupling& coupling,
                     const TrainConfig& cfg) {
  cfg.validate();
  if (pred.steps() != full.steps() || pred.dim() != full.dim()) {
    fail(ErrorKind::size_mismatch, "predictor shape does not match the problem");
  }
  Rng rng(cfg.seed);
  TrainResult out{pred, {}, false, 0.0};
  double prev = kInf;
  std::size_t increases = 0;
  for (std::size_t step = 0; step < cfg.n_epochs; ++step) {
    LossGradient lg;
    try {
      if (cfg.batch > 0) {
        const LearningProblem sampled(sample_empirical(coupling, cfg.batch, rng), full.reciprocal().reference_handle(),
                                      full.direction(), KernelMode::exact_step);
        lg = sampled.loss_and_gradient(out.predictor);
      } else {
        lg = full.loss_and_gradient(out.predictor);
      }
    } catch (const Error& e) {
      // Softmax underflow left a target transition with zero predicted mass.
      if (e.kind() != ErrorKind::support_violation) throw;
      lg.loss = kInf;
      lg.grad_norm = kInf;
    }
    out.curve.push_back({step, lg.loss, lg.grad_norm});
    if (!std::isfinite(lg.loss)) {
      out.diverged = true;
      break;
    }
    if (lg.loss > prev) {
      if (++increases >= cfg.divergence_patience) {
        out.diverged = true;
        break;
      }
    } else {
      increases = 0;
    }
    prev = lg.loss;
    if (cfg.tol_grad > 0.0 && lg.grad_norm < cfg.tol_grad) break;
    for (std::size_t k = 0; k < out.predictor.steps(); ++k) out.predictor.logits(k) -= cfg.learning_rate * lg.grad[k];
  }
  out.kernel_error = out.diverged ? kInf : full.kernel_error(out.predictor);
  return out;
}

}  // namespace

TabularPredictor::TabularPredictor(std::size_t steps, std::size_t dim)
    : dim_(dim), logits_(steps, Matrix::Zero(ix(dim), ix(dim))) {
  if (steps == 0 || dim < 2) fail(ErrorKind::invalid_parameter, "predictor needs at least one step and two states");
}

TabularPredictor TabularPredictor::from_probabilities(const std::vector<Matrix>& q) {
  if (q.empty()) fail(ErrorKind::invalid_parameter, "no probability tables");
  TabularPredictor p(q.size(), static_cast<std::size_t>(q.front().rows()));
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (q[k].rows() != ix(p.dim()) || q[k].cols() != ix(p.dim())) fail(ErrorKind::size_mismatch, "table shape mismatch");
    p.logits_[k] = q[k].unaryExpr([](double v) { return v > 0.0 ? std::log(v) : -kInf; });
  }
  return p;
}

Matrix TabularPredictor::probabilities(std::size_t k) const { return softmax_rows(logits_.at(k)); }

const char* to_string(KernelMode m) noexcept { return m == KernelMode::exact_step ? "exact_step" : "first_order"; }

KernelMode kernel_mode_from_string(const std::string& s) {
  if (s == "exact_step") return KernelMode::exact_step;
  if (s == "first_order") return KernelMode::first_order;
  fail(ErrorKind::validation, "unknown kernel mode '" + s + "' (expected exact_step or first_order)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) fail(ErrorKind::validation, "learning_rate must be positive");
  if (divergence_patience < 1) fail(ErrorKind::validation, "divergence_patience must be at least 1");
  if (!(tol_grad >= 0.0)) fail(ErrorKind::validation, "tol_grad must be non-negative");
}

Vector predictor_rate(const TabularPredictor& pred, const ReferenceProcess& ref, std::size_t k, std::size_t x) {
  if (pred.dim() != ref.dim()) fail(ErrorKind::size_mismatch, "predictor and reference differ in dimension");
  if (k >= pred.steps() || k > ref.steps()) fail(ErrorKind::invalid_parameter, "grid index out of range");
  if (x >= ref.dim()) fail(ErrorKind::invalid_parameter, "state out of range");
  const Vector q = pred.probabilities(k).row(ix(x)).transpose();
  const Matrix& h = ref.to_end(k);
  Vector w(q.size());
  for (Idx z = 0; z < q.size(); ++z) {
    if (q(z) > 0.0 && !(h(ix(x), z) > 0.0)) fail(ErrorKind::positivity_violation, "predicted endpoint unreachable");
    w(z) = q(z) > 0.0 ? q(z) / h(ix(x), z) : 0.0;
  }
  const Vector hw = h * w;
  if (!(hw(ix(x)) > 0.0)) fail(ErrorKind::positivity_violation, "P z is not positive at the current state");
  const Matrix a = ref.rate(k);
  Vector row(a.cols());
  for (Idx y = 0; y < a.cols(); ++y) row(y) = y == ix(x) ? 0.0 : a(ix(x), y) * hw(y) / hw(ix(x));
  row(ix(x)) = -row.sum();
  return row;
}

LearningProblem::LearningProblem(const Coupling& coupling, std::shared_ptr<const ReferenceProcess> reference,
                                 Direction direction, KernelMode mode)
    : rec_(coupling, std::move(reference)), direction_(direction), mode_(mode), dim_(coupling.dim()) {
  const ReferenceProcess& ref = rec_.reference();
  const std::size_t n = ref.steps();
  const Idx d = ix(dim_);
  slices_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    Slice& s = slices_[k];
    s.inv_dt = 1.0 / ref.dt(k);
    const Matrix& step = ref.step_kernel(k);
    Matrix joint;  // (state, far endpoint)
    std::vector<Matrix> targets(dim_);
    if (direction == Direction::forward) {
      joint = reciprocal_joint(rec_, k);
      const Matrix& h_now = ref.to_end(k);
      const Matrix& h_next = ref.to_end(k + 1);
      const Matrix rate = ref.rate(k);
      for (Idx z = 0; z < d; ++z) {
        if (!(h_now.col(z).minCoeff() > 0.0)) fail(ErrorKind::support_violation, "endpoint unreachable from some state");
        targets[ix_to(z)] = h_now.col(z).cwiseInverse().asDiagonal() * step * h_next.col(z).asDiagonal();
      }
      if (mode == KernelMode::first_order) {
        for (Idx z = 0; z < d; ++z) {
          Matrix a = h_now.col(z).cwiseInverse().asDiagonal() * rate * h_now.col(z).asDiagonal();
          a.diagonal().setZero();
          a.diagonal() = -a.rowwise().sum();
          s.basis.push_back(clip_rows(Matrix::Identity(d, d) + ref.dt(k) * a));
        }
      }
    } else {
      joint = reciprocal_joint_initial(rec_, k + 1).transpose();
      const Matrix& p_now = ref.from_start(k);
      const Matrix& p_next = ref.from_start(k + 1);
      const Matrix rate = ref.rate(k + 1);
      for (Idx x0 = 0; x0 < d; ++x0) {
        if (!(p_next.row(x0).minCoeff() > 0.0)) fail(ErrorKind::support_violation, "state unreachable from some start");
        // T(y, x) = P_{0:k}(x0, x) P_k(x, y) / P_{0:k+1}(x0, y)
        targets[ix_to(x0)] = p_next.row(x0).transpose().cwiseInverse().asDiagonal() * step.transpose() *
                             p_now.row(x0).transpose().asDiagonal();
      }
      if (mode == KernelMode::first_order) {
        for (Idx x0 = 0; x0 < d; ++x0) {
          const Vector p = p_next.row(x0).transpose();
          Matrix a = p.cwiseInverse().asDiagonal() * rate.transpose() * p.asDiagonal();
          a.diagonal().setZero();
          a.diagonal() = -a.rowwise().sum();
          s.basis.push_back(clip_rows(Matrix::Identity(d, d) + ref.dt(k) * a));
        }
      }
    }
    s.mass = joint.rowwise().sum();
    s.weight = Matrix::Zero(d, d);
    s.entropy = 0.0;
    for (Idx z = 0; z < d; ++z) {
      const Matrix& t = targets[ix_to(z)];
      for (Idx x = 0; x < d; ++x) {
        const double lam = joint(x, z);
        if (lam <= 0.0) continue;
        for (Idx y = 0; y < d; ++y) {
          const double v = t(x, y);
          if (v <= 0.0) continue;
          s.weight(x, y) += lam * v;
          s.entropy += lam * v * std::log(v);
        }
      }
    }
    s.joint = std::move(joint);
    if (mode == KernelMode::exact_step) s.basis = std::move(targets);
  }
}

Matrix LearningProblem::mixture(const Slice& s, const Matrix& q) const {
  const Idx d = ix(dim_);
  Matrix k = Matrix::Zero(d, d);
  for (Idx z = 0; z < d; ++z) k += q.col(z).asDiagonal() * s.basis[ix_to(z)];
  return k;
}

double LearningProblem::loss(const TabularPredictor& pred) const {
  if (pred.steps() != steps() || pred.dim() != dim_) fail(ErrorKind::size_mismatch, "predictor shape mismatch");
  double total = 0.0;
  for (std::size_t k = 0; k < slices_.size(); ++k) {
    const Slice& s = slices_[k];
    const Matrix kern = mixture(s, pred.probabilities(k));
    double cross = 0.0;
    for (Idx x = 0; x < kern.rows(); ++x) {
      for (Idx y = 0; y < kern.cols(); ++y) {
        const double c = s.weight(x, y);
        if (c <= 0.0) continue;
        if (!(kern(x, y) > 0.0)) fail(ErrorKind::support_violation, "predictor kernel misses the target support");
        cross += c * std::log(kern(x, y));
      }
    }
    total += s.inv_dt * (s.entropy - cross);
  }
  return total;
}

double LearningProblem::row_loss(std::size_t k, std::size_t x, const Eigen::RowVectorXd& logits) const {
  const Slice& s = slices_.at(k);
  const Idx d = ix(dim_);
  if (x >= dim_ || logits.size() != d) fail(ErrorKind::size_mismatch, "row logits shape mismatch");
  const Matrix q = softmax_rows(logits);
  Eigen::RowVectorXd kern = Eigen::RowVectorXd::Zero(d);
  for (Idx z = 0; z < d; ++z) kern += q(0, z) * s.basis[ix_to(z)].row(ix(x));
  double cross = 0.0;
  for (Idx y = 0; y < d; ++y) {
    const double c = s.weight(ix(x), y);
    if (c <= 0.0) continue;
    if (!(kern(y) > 0.0)) fail(ErrorKind::support_violation, "predictor kernel misses the target support");
    cross += c * std::log(kern(y));
  }
  return -s.inv_dt * cross;
}

LossGradient LearningProblem::loss_and_gradient(const TabularPredictor& pred) const {
  if (pred.steps() != steps() || pred.dim() != dim_) fail(ErrorKind::size_mismatch, "predictor shape mismatch");
  const Idx d = ix(dim_);
  LossGradient out;
  out.grad.assign(slices_.size(), Matrix::Zero(d, d));
  double sq = 0.0;
  for (std::size_t k = 0; k < slices_.size(); ++k) {
    const Slice& s = slices_[k];
    const Matrix q = pred.probabilities(k);
    const Matrix kern = mixture(s, q);
    Matrix ratio = Matrix::Zero(d, d);  // C / K on the target support
    double cross = 0.0;
    for (Idx x = 0; x < d; ++x) {
      for (Idx y = 0; y < d; ++y) {
        const double c = s.weight(x, y);
        if (c <= 0.0) continue;
        if (!(kern(x, y) > 0.0)) fail(ErrorKind::support_violation, "predictor kernel misses the target support");
        cross += c * std::log(kern(x, y));
        ratio(x, y) = c / kern(x, y);
      }
    }
    out.loss += s.inv_dt * (s.entropy - cross);
    // dL/dq(x, z) = -(1/dt) sum_y C(x, y) B_z(x, y) / K(x, y)
    Matrix dq(d, d);
    for (Idx z = 0; z < d; ++z) dq.col(z) = -s.inv_dt * ratio.cwiseProduct(s.basis[ix_to(z)]).rowwise().sum();
    Matrix& g = out.grad[k];
    for (Idx x = 0; x < d; ++x) {
      const double mean = q.row(x).dot(dq.row(x));
      for (Idx z = 0; z < d; ++z) g(x, z) = q(x, z) > 0.0 ? q(x, z) * (dq(x, z) - mean) : 0.0;
    }
    sq += g.squaredNorm();
  }
  out.grad_norm = std::sqrt(sq);
  return out;
}

double LearningProblem::floor() const {
  double total = 0.0;
  for (const Slice& s : slices_) {
    double cross = 0.0;
    for (Idx x = 0; x < s.weight.rows(); ++x) {
      for (Idx y = 0; y < s.weight.cols(); ++y) {
        const double c = s.weight(x, y);
        if (c > 0.0) cross += c * std::log(c / s.mass(x));
      }
    }
    total += s.inv_dt * (s.entropy - cross);
  }
  return total;
}

TabularPredictor LearningProblem::exact_posterior() const {
  std::vector<Matrix> q;
  q.reserve(slices_.size());
  const Idx d = ix(dim_);
  for (const Slice& s : slices_) {
    Matrix p(d, d);
    for (Idx x = 0; x < d; ++x) {
      if (s.mass(x) > 0.0) p.row(x) = s.joint.row(x) / s.mass(x);
      else p.row(x).setConstant(1.0 / static_cast<double>(d));
    }
    q.push_back(std::move(p));
  }
  return TabularPredictor::from_probabilities(q);
}

std::vector<Matrix> LearningProblem::predictor_kernels(const TabularPredictor& pred) const {
  if (pred.steps() != steps() || pred.dim() != dim_) fail(ErrorKind::size_mismatch, "predictor shape mismatch");
  std::vector<Matrix> out;
  out.reserve(slices_.size());
  for (std::size_t k = 0; k < slices_.size(); ++k) out.push_back(mixture(slices_[k], pred.probabilities(k)));
  return out;
}

double LearningProblem::kernel_error(const TabularPredictor& pred) const {
  const auto kernels = predictor_kernels(pred);
  std::vector<Matrix> exact;
  if (direction_ == Direction::forward) exact = markov_projection(rec_).kernels;
  else exact = markov_projection_reverse(rec_).reversed;
  double err = 0.0;
  for (std::size_t k = 0; k < kernels.size(); ++k) {
    for (Idx x = 0; x < kernels[k].rows(); ++x) {
      if (slices_[k].mass(x) > 0.0) err = std::max(err, (kernels[k].row(x) - exact[k].row(x)).cwiseAbs().maxCoeff());
    }
  }
  return err;
}

Coupling LearningProblem::induced_coupling(const TabularPredictor& pred) const {
  return induced_coupling(pred, direction_ == Direction::forward ? rec_.coupling().initial_marginal()
                                                                 : rec_.coupling().terminal_marginal());
}

Coupling LearningProblem::induced_coupling(const TabularPredictor& pred, const Vector& start) const {
  if (start.size() != ix(dim_)) fail(ErrorKind::size_mismatch, "start law has the wrong dimension");
  auto kernels = predictor_kernels(pred);
  if (direction_ == Direction::forward) return MarkovChainMeasure{start, std::move(kernels)}.endpoint_coupling();
  return BackwardMarkovChainMeasure{start, std::move(kernels)}.endpoint_coupling();
}

double forward_loss(const TabularPredictor& pred, const Coupling& coupling,
                    std::shared_ptr<const ReferenceProcess> reference, KernelMode mode) {
  return LearningProblem(coupling, std::move(reference), Direction::forward, mode).loss(pred);
}

double backward_loss(const TabularPredictor& pred, const Coupling& coupling,
                     std::shared_ptr<const ReferenceProcess> reference, KernelMode mode) {
  return LearningProblem(coupling, std::move(reference), Direction::backward, mode).loss(pred);
}

TrainResult train(TabularPredictor pred, const Coupling& coupling, std::shared_ptr<const ReferenceProcess> reference,
                  const TrainConfig& cfg, Direction direction) {
  const LearningProblem full(coupling, std::move(reference), direction, cfg.kernel);
  return train_on(std::move(pred), full, coupling, cfg);
}

GradientCheck gradient_check(const TabularPredictor& pred, const LearningProblem& problem, std::size_t n_coords,
                             double h, std::uint64_t seed, double floor_scale) {
  if (!(h > 0.0)) fail(ErrorKind::invalid_parameter, "finite-difference step must be positive");
  const LossGradient lg = problem.loss_and_gradient(pred);
  double gmax = 0.0;
  for (const auto& g : lg.grad) gmax = std::max(gmax, g.cwiseAbs().maxCoeff());

  struct Coord {
    std::size_t k;
    Idx x, z;
  };
  std::vector<Coord> eligible;
  const Idx d = ix(pred.dim());
  for (std::size_t k = 0; k < pred.steps(); ++k) {
    for (Idx x = 0; x < d; ++x) {
      for (Idx z = 0; z < d; ++z) {
        if (std::isfinite(pred.logits(k)(x, z))) eligible.push_back({k, x, z});
      }
    }
  }
  if (eligible.empty()) fail(ErrorKind::invalid_parameter, "predictor has no finite logits");

  Rng rng(seed);
  GradientCheck out;
  out.max_abs_gradient = gmax;
  for (std::size_t i = 0; i < n_coords; ++i) {
    const Coord c = eligible[static_cast<std::size_t>(rng.uniform() * static_cast<double>(eligible.size()))];
    Eigen::RowVectorXd row = pred.logits(c.k).row(c.x);
    row(c.z) += h;
    const double up = problem.row_loss(c.k, static_cast<std::size_t>(c.x), row);
    row(c.z) -= 2.0 * h;
    const double down = problem.row_loss(c.k, static_cast<std::size_t>(c.x), row);
    const double fd = (up - down) / (2.0 * h);
    const double an = lg.grad[c.k](c.x, c.z);
    const double denom = std::max({std::abs(an), std::abs(fd), floor_scale * gmax});
    const double rel = denom > 0.0 ? std::abs(an - fd) / denom : 0.0;
    out.max_relative_error = std::max(out.max_relative_error, rel);
    ++out.coordinates;
  }
  return out;
}

ApproxImfResult approximate_imf(const Vector& gamma, const Vector& xi, std::shared_ptr<const ReferenceProcess> reference,
                                const ApproxImfConfig& cfg, const Coupling& oracle) {
  if (!reference) fail(ErrorKind::invalid_parameter, "approximate_imf needs a reference process");
  if (cfg.n_outer < 1) fail(ErrorKind::invalid_parameter, "n_outer must be at least 1");
  const std::size_t n = reference->steps();
  const std::size_t d = reference->dim();
  Coupling current = Coupling::independent(gamma, xi);
  TabularPredictor fwd(n, d), bwd(n, d);
  ApproxImfResult out{current, {}};
  for (std::size_t it = 1; it <= cfg.n_outer; ++it) {
    const Direction dir = (cfg.alternate_direction && it % 2 == 0) ? Direction::backward : Direction::forward;
    const LearningProblem problem(current, reference, dir, cfg.train.kernel);
    TabularPredictor& pred = dir == Direction::forward ? fwd : bwd;
    if (cfg.exact_init) pred = problem.exact_posterior();
    TrainConfig tc = cfg.train;
    tc.seed = mix_seed(cfg.train.seed, it);
    TrainResult r = train_on(pred, problem, current, tc);
    if (r.diverged) fail(ErrorKind::divergence, "training diverged at outer iteration " + std::to_string(it));
    pred = std::move(r.predictor);
    Coupling next = problem.induced_coupling(pred, dir == Direction::forward ? gamma : xi);
    ApproxImfRecord rec;
    rec.iteration = it;
    rec.direction = dir;
    rec.final_loss = problem.loss(pred);
    rec.floor = problem.floor();
    rec.kernel_error = r.kernel_error;
    rec.tv_to_oracle = total_variation(next.matrix(), oracle.matrix());
    rec.initial_marginal_tv = total_variation(next.initial_marginal(), gamma);
    rec.terminal_marginal_tv = total_variation(next.terminal_marginal(), xi);
    out.trace.push_back(rec);
    current = std::move(next);
  }
  out.coupling = current;
  return out;
}

void write_loss_curve_csv(std::ostream& out, const std::vector<LossPoint>& curve) {
  out << "step,loss,grad_norm\n";
  for (const auto& p : curve) {
    out << p.step << ',' << io::format_double(p.loss) << ',' << io::format_double(p.grad_norm) << '\n';
  }
}

nlohmann::ordered_json predictor_to_json(const TabularPredictor& pred) {
  nlohmann::ordered_json j;
  j["steps"] = pred.steps();
  j["dim"] = pred.dim();
  auto tables = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < pred.steps(); ++k) {
    auto rows = nlohmann::ordered_json::array();
    const Matrix& l = pred.logits(k);
    for (Idx x = 0; x < l.rows(); ++x) {
      auto row = nlohmann::ordered_json::array();
      for (Idx z = 0; z < l.cols(); ++z) {
        if (std::isfinite(l(x, z))) row.push_back(l(x, z));
        else row.push_back(nullptr);
      }
      rows.push_back(std::move(row));
    }
    tables.push_back(std::move(rows));
  }
  j["logits"] = std::move(tables);
  return j;
}

TabularPredictor predictor_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("steps") || !j.contains("dim") || !j.contains("logits")) {
    fail(ErrorKind::parse, "predictor: expected steps, dim and logits");
  }
  const auto steps = j["steps"].get<std::size_t>();
  const auto dim = j["dim"].get<std::size_t>();
  const auto& tables = j["logits"];
  if (!tables.is_array() || tables.size() != steps) fail(ErrorKind::parse, "predictor.logits: wrong step count");
  TabularPredictor p(steps, dim);
  for (std::size_t k = 0; k < steps; ++k) {
    if (!tables[k].is_array() || tables[k].size() != dim) fail(ErrorKind::parse, "predictor.logits: wrong row count");
    for (std::size_t x = 0; x < dim; ++x) {
      const auto& row = tables[k][x];
      if (!row.is_array() || row.size() != dim) fail(ErrorKind::parse, "predictor.logits: wrong row length");
      for (std::size_t z = 0; z < dim; ++z) {
        p.logits(k)(ix(x), ix(z)) = row[z].is_null() ? -kInf : row[z].get<double>();
      }
    }
  }
  return p;
}

}  // namespace dsb
