#include "dsb/measures.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "dsb/error.hpp"
#include "dsb/io.hpp"

namespace dsb {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) fail(ErrorKind::size_mismatch, std::string(what) + " must be square");
}

// Row-normalizes; rows with no mass become identity rows so the result stays
// a valid kernel on states the measure never visits.
Matrix normalize_rows_or_identity(Matrix m) {
  for (Eigen::Index x = 0; x < m.rows(); ++x) {
    const double s = m.row(x).sum();
    if (s > 0.0) {
      m.row(x) /= s;
    } else {
      m.row(x).setZero();
      m(x, x) = 1.0;
    }
  }
  return m;
}

double kl_rows(const Eigen::Ref<const Eigen::RowVectorXd>& p, const Eigen::Ref<const Eigen::RowVectorXd>& q) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) <= 0.0) continue;
    if (q(i) <= 0.0) return kInf;
    acc += p(i) * std::log(p(i) / q(i));
  }
  return acc;
}

// Given H(x, z) = posterior(z | x) / P_{k:N}(x, z), the mixed pinned step
// kernel is P_k(x, y) * sum_z H(x, z) P_{k+1:N}(y, z).
Matrix mix_pinned_step(const ReferenceProcess& ref, std::size_t k, const Matrix& h) {
  return ref.step_kernel(k).cwiseProduct(h * ref.to_end(k + 1).transpose());
}

}  // namespace

Coupling::Coupling(Matrix joint, double tol) : p_(std::move(joint)) {
  check_square(p_, "coupling");
  if (p_.rows() < 1) fail(ErrorKind::invalid_parameter, "coupling is empty");
  if (!p_.allFinite() || (p_.array() < 0.0).any()) fail(ErrorKind::invalid_parameter, "coupling entries must be non-negative");
  if (std::abs(p_.sum() - 1.0) > tol) {
    fail(ErrorKind::invalid_parameter, "coupling mass " + io::format_double(p_.sum()) + " differs from 1");
  }
}

Coupling Coupling::independent(const Vector& gamma, const Vector& xi) {
  if (gamma.size() != xi.size()) fail(ErrorKind::size_mismatch, "marginals differ in size");
  return Coupling(gamma * xi.transpose(), 1e-9);
}

ReciprocalMeasure::ReciprocalMeasure(Coupling coupling, std::shared_ptr<const ReferenceProcess> reference)
    : coupling_(std::move(coupling)), reference_(std::move(reference)) {
  if (!reference_) fail(ErrorKind::invalid_parameter, "reciprocal measure needs a reference process");
  if (reference_->dim() != coupling_.dim()) fail(ErrorKind::size_mismatch, "coupling and reference differ in size");
  const Matrix& pi = coupling_.matrix();
  const Matrix& endpoint = reference_->to_end(0);
  weights_ = Matrix::Zero(pi.rows(), pi.cols());
  for (Eigen::Index x = 0; x < pi.rows(); ++x) {
    for (Eigen::Index z = 0; z < pi.cols(); ++z) {
      if (pi(x, z) <= 0.0) continue;
      if (!(endpoint(x, z) > 0.0)) {
        fail(ErrorKind::support_violation, "coupling charges (" + std::to_string(x) + ", " + std::to_string(z) +
                                               ") but the reference cannot bridge it");
      }
      weights_(x, z) = pi(x, z) / endpoint(x, z);
    }
  }
}

Vector MarkovChainMeasure::marginal(std::size_t k) const {
  if (k > kernels.size()) fail(ErrorKind::invalid_parameter, "grid index out of range");
  Eigen::RowVectorXd mu = init.transpose();
  for (std::size_t i = 0; i < k; ++i) mu = mu * kernels[i];
  return mu.transpose();
}

std::vector<Vector> MarkovChainMeasure::marginals() const {
  std::vector<Vector> out;
  out.reserve(kernels.size() + 1);
  Eigen::RowVectorXd mu = init.transpose();
  out.push_back(mu.transpose());
  for (const auto& k : kernels) {
    mu = mu * k;
    out.push_back(mu.transpose());
  }
  return out;
}

Coupling MarkovChainMeasure::endpoint_coupling() const {
  Matrix t = init.asDiagonal();
  for (const auto& k : kernels) t = t * k;
  return Coupling(std::move(t), 1e-9);
}

Vector BackwardMarkovChainMeasure::marginal(std::size_t k) const {
  if (k > reversed.size()) fail(ErrorKind::invalid_parameter, "grid index out of range");
  Eigen::RowVectorXd mu = terminal.transpose();
  for (std::size_t i = reversed.size(); i > k; --i) mu = mu * reversed[i - 1];
  return mu.transpose();
}

Coupling BackwardMarkovChainMeasure::endpoint_coupling() const {
  Matrix t = terminal.asDiagonal();
  for (std::size_t i = reversed.size(); i > 0; --i) t = t * reversed[i - 1];
  return Coupling(t.transpose(), 1e-9);
}

MarkovChainMeasure BackwardMarkovChainMeasure::to_forward() const {
  const std::size_t n = reversed.size();
  std::vector<Vector> mu(n + 1);
  mu[n] = terminal;
  for (std::size_t k = n; k > 0; --k) mu[k - 1] = (mu[k].transpose() * reversed[k - 1]).transpose();
  MarkovChainMeasure out;
  out.init = mu[0];
  out.kernels.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    // K_k(x, y) = mu_{k+1}(y) R_k(y, x) / mu_k(x)
    Matrix joint = (mu[k + 1].asDiagonal() * reversed[k]).transpose();
    out.kernels.push_back(normalize_rows_or_identity(std::move(joint)));
  }
  return out;
}

Matrix reciprocal_joint(const ReciprocalMeasure& rec, std::size_t k) {
  const auto& ref = rec.reference();
  if (k > ref.steps()) fail(ErrorKind::invalid_parameter, "grid index out of range");
  return (ref.from_start(k).transpose() * rec.bridge_weights()).cwiseProduct(ref.to_end(k));
}

Matrix reciprocal_joint_initial(const ReciprocalMeasure& rec, std::size_t k) {
  const auto& ref = rec.reference();
  if (k > ref.steps()) fail(ErrorKind::invalid_parameter, "grid index out of range");
  return ref.from_start(k).cwiseProduct(rec.bridge_weights() * ref.to_end(k).transpose());
}

Vector reciprocal_marginal(const ReciprocalMeasure& rec, std::size_t k) {
  return reciprocal_joint(rec, k).rowwise().sum();
}

MarkovChainMeasure markov_projection(const ReciprocalMeasure& rec) {
  const auto& ref = rec.reference();
  MarkovChainMeasure out;
  out.init = rec.coupling().initial_marginal();
  out.kernels.reserve(ref.steps());
  for (std::size_t k = 0; k < ref.steps(); ++k) {
    // Posterior of X_N given X_k = x, divided by P_{k:N}(x, z): the P_{k:N}
    // factor of the joint cancels, leaving P_{0:k}^T W normalized per row.
    Matrix h = ref.from_start(k).transpose() * rec.bridge_weights();
    const Vector mass = reciprocal_joint(rec, k).rowwise().sum();
    Matrix step(ref.dim(), ref.dim());
    for (Eigen::Index x = 0; x < h.rows(); ++x) {
      if (mass(x) > 0.0) {
        h.row(x) /= mass(x);
      } else {
        h.row(x).setZero();
      }
    }
    step = mix_pinned_step(ref, k, h);
    out.kernels.push_back(normalize_rows_or_identity(std::move(step)));
  }
  return out;
}

BackwardMarkovChainMeasure markov_projection_reverse(const ReciprocalMeasure& rec) {
  const auto& ref = rec.reference();
  const std::size_t n = ref.steps();
  BackwardMarkovChainMeasure out;
  out.terminal = rec.coupling().terminal_marginal();
  out.reversed.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // G(y, x0) = Lambda(X_0 = x0 | X_{k+1} = y) / P_{0:k+1}(x0, y)
    //          = [W P_{k+1:N}^T](x0, y) / Lambda_{k+1}(y)
    Matrix g = (rec.bridge_weights() * ref.to_end(k + 1).transpose()).transpose();
    const Vector mass = reciprocal_joint_initial(rec, k + 1).colwise().sum().transpose();
    for (Eigen::Index y = 0; y < g.rows(); ++y) {
      if (mass(y) > 0.0) g.row(y) /= mass(y);
      else g.row(y).setZero();
    }
    // R_k(y, x) = P_k(x, y) sum_x0 G(y, x0) P_{0:k}(x0, x)
    Matrix r = (g * ref.from_start(k)).cwiseProduct(ref.step_kernel(k).transpose());
    out.reversed[k] = normalize_rows_or_identity(std::move(r));
  }
  return out;
}

ReciprocalMeasure reciprocal_projection(const MarkovChainMeasure& m, std::shared_ptr<const ReferenceProcess> reference) {
  return ReciprocalMeasure(m.endpoint_coupling(), std::move(reference));
}

ReciprocalMeasure reciprocal_projection(const BackwardMarkovChainMeasure& m,
                                        std::shared_ptr<const ReferenceProcess> reference) {
  return ReciprocalMeasure(m.endpoint_coupling(), std::move(reference));
}

MarkovChainMeasure reference_chain(const ReferenceProcess& ref, const Vector& init) {
  MarkovChainMeasure out;
  out.init = init;
  for (std::size_t k = 0; k < ref.steps(); ++k) out.kernels.push_back(ref.step_kernel(k));
  return out;
}

double kl_vectors(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) fail(ErrorKind::size_mismatch, "KL arguments differ in size");
  return kl_rows(a.transpose(), b.transpose());
}

double kl_couplings(const Coupling& a, const Coupling& b) {
  if (a.dim() != b.dim()) fail(ErrorKind::size_mismatch, "KL arguments differ in size");
  double acc = 0.0;
  const Matrix& p = a.matrix();
  const Matrix& q = b.matrix();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double r = kl_rows(p.row(i), q.row(i));
    if (std::isinf(r)) return kInf;
    acc += r;
  }
  return acc;
}

double kl_markov_paths(const MarkovChainMeasure& a, const MarkovChainMeasure& b) {
  if (a.steps() != b.steps()) fail(ErrorKind::size_mismatch, "Markov measures live on different grids");
  double acc = kl_vectors(a.init, b.init);
  if (std::isinf(acc)) return kInf;
  Eigen::RowVectorXd mu = a.init.transpose();
  for (std::size_t k = 0; k < a.steps(); ++k) {
    for (Eigen::Index x = 0; x < mu.size(); ++x) {
      if (mu(x) <= 0.0) continue;
      const double r = kl_rows(a.kernels[k].row(x), b.kernels[k].row(x));
      if (std::isinf(r)) return kInf;
      acc += mu(x) * r;
    }
    mu = mu * a.kernels[k];
  }
  return acc;
}

MarkovChainMeasure conditioned_on_start(const ReciprocalMeasure& rec, std::size_t x0) {
  const auto& ref = rec.reference();
  if (x0 >= ref.dim()) fail(ErrorKind::invalid_parameter, "state out of range");
  const Vector w = rec.bridge_weights().row(static_cast<Eigen::Index>(x0)).transpose();
  MarkovChainMeasure out;
  out.init = Vector::Zero(static_cast<Eigen::Index>(ref.dim()));
  out.init(static_cast<Eigen::Index>(x0)) = 1.0;
  for (std::size_t k = 0; k < ref.steps(); ++k) {
    // h-transform with h = P_{k:N} w.
    const Vector h = ref.to_end(k) * w;
    Matrix hz = Matrix::Zero(static_cast<Eigen::Index>(ref.dim()), w.size());
    for (Eigen::Index x = 0; x < hz.rows(); ++x) {
      if (h(x) > 0.0) hz.row(x) = w.transpose() / h(x);
    }
    out.kernels.push_back(normalize_rows_or_identity(mix_pinned_step(ref, k, hz)));
  }
  return out;
}

double kl_reciprocal_to_markov(const ReciprocalMeasure& rec, const MarkovChainMeasure& m) {
  const auto& ref = rec.reference();
  if (m.steps() != ref.steps()) fail(ErrorKind::size_mismatch, "measures live on different grids");
  const Vector gamma = rec.coupling().initial_marginal();
  double acc = kl_vectors(gamma, m.init);
  if (std::isinf(acc)) return kInf;
  for (Eigen::Index x0 = 0; x0 < gamma.size(); ++x0) {
    if (gamma(x0) <= 0.0) continue;
    const auto cond = conditioned_on_start(rec, static_cast<std::size_t>(x0));
    Eigen::RowVectorXd mu = cond.init.transpose();
    double inner = 0.0;
    for (std::size_t k = 0; k < cond.steps(); ++k) {
      for (Eigen::Index x = 0; x < mu.size(); ++x) {
        if (mu(x) <= 0.0) continue;
        const double r = kl_rows(cond.kernels[k].row(x), m.kernels[k].row(x));
        if (std::isinf(r)) return kInf;
        inner += mu(x) * r;
      }
      mu = mu * cond.kernels[k];
    }
    acc += gamma(x0) * inner;
  }
  return acc;
}

double total_variation(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) fail(ErrorKind::size_mismatch, "TV arguments differ in shape");
  return 0.5 * (a - b).cwiseAbs().sum();
}

double total_variation(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) fail(ErrorKind::size_mismatch, "TV arguments differ in size");
  return 0.5 * (a - b).cwiseAbs().sum();
}

void write_matrix_csv(std::ostream& out, const Matrix& m, const StateSpace& space) {
  if (static_cast<std::size_t>(m.rows()) != space.size() || m.rows() != m.cols()) {
    fail(ErrorKind::size_mismatch, "matrix does not match the state space");
  }
  out << "label";
  for (const auto& l : space.labels()) out << ',' << l;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << space.label(static_cast<std::size_t>(i));
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << io::format_double(m(i, j));
    out << '\n';
  }
}

void write_coupling_csv(std::ostream& out, const Coupling& c, const StateSpace& space) {
  write_matrix_csv(out, c.matrix(), space);
}

LabeledMatrix read_matrix_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::parse, "empty matrix CSV");
  auto header = io::split_csv_line(line);
  if (header.size() < 2) fail(ErrorKind::parse, "matrix CSV header needs labels");
  LabeledMatrix out;
  out.labels.assign(header.begin() + 1, header.end());
  const auto d = static_cast<Eigen::Index>(out.labels.size());
  out.values = Matrix::Zero(d, d);
  Eigen::Index row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = io::split_csv_line(line);
    if (row >= d) fail(ErrorKind::parse, "matrix CSV has too many rows");
    if (static_cast<Eigen::Index>(fields.size()) != d + 1) fail(ErrorKind::parse, "matrix CSV row has wrong width");
    if (fields[0] != out.labels[static_cast<std::size_t>(row)]) {
      fail(ErrorKind::parse, "matrix CSV row label '" + fields[0] + "' does not match header");
    }
    for (Eigen::Index j = 0; j < d; ++j) {
      try {
        out.values(row, j) = std::stod(fields[static_cast<std::size_t>(j + 1)]);
      } catch (const std::exception&) {
        fail(ErrorKind::parse, "matrix CSV entry '" + fields[static_cast<std::size_t>(j + 1)] + "' is not a number");
      }
    }
    ++row;
  }
  if (row != d) fail(ErrorKind::parse, "matrix CSV has too few rows");
  return out;
}

Coupling read_coupling_csv(std::istream& in, const StateSpace& space) {
  auto m = read_matrix_csv(in);
  if (m.labels != space.labels()) fail(ErrorKind::parse, "coupling labels do not match the state space");
  return Coupling(std::move(m.values), 1e-9);
}

LabeledVector read_marginal_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::parse, "empty marginal CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "label,probability") fail(ErrorKind::parse, "marginal CSV header must be 'label,probability'");
  LabeledVector out;
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = io::split_csv_line(line);
    if (fields.size() != 2) fail(ErrorKind::parse, "marginal CSV row needs label and probability");
    try {
      std::size_t used = 0;
      values.push_back(std::stod(fields[1], &used));
      if (used != fields[1].size()) throw std::invalid_argument(fields[1]);
    } catch (const std::exception&) {
      fail(ErrorKind::parse, "marginal CSV entry '" + fields[1] + "' is not a number");
    }
    out.labels.push_back(fields[0]);
  }
  if (values.empty()) fail(ErrorKind::parse, "marginal CSV has no rows");
  out.values = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
  return out;
}

void write_marginal_csv(std::ostream& out, const Vector& p, const StateSpace& space) {
  if (static_cast<std::size_t>(p.size()) != space.size()) fail(ErrorKind::size_mismatch, "marginal size != state space");
  out << "label,probability\n";
  for (std::size_t i = 0; i < space.size(); ++i) {
    out << space.label(i) << ',' << io::format_double(p(static_cast<Eigen::Index>(i))) << '\n';
  }
}

void write_markov_chain(const std::filesystem::path& dir, const MarkovChainMeasure& m, const StateSpace& space) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json index;
  index["labels"] = space.labels();
  index["init"] = std::vector<double>(m.init.data(), m.init.data() + m.init.size());
  index["steps"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < m.steps(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "step_%05zu.csv", k);
    std::ofstream f(dir / name);
    write_matrix_csv(f, m.kernels[k], space);
    index["steps"].push_back(name);
  }
  std::ofstream f(dir / "index.json");
  f << index.dump(2) << '\n';
}

}  // namespace dsb
