#include "dsb/qap_matching.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "dsb/error.hpp"
#include "dsb/random.hpp"

namespace dsb {
namespace {

using Idx = Eigen::Index;

Idx ix(std::size_t i) { return static_cast<Idx>(i); }

// Perturbed scores for one trial. pair[(i * n + a)] holds, for every j != i
// and every real target neighbor b of a, the entry at j * deg(a) + position of b.
struct TrialScores {
  Matrix node;
  std::vector<std::vector<double>> pair;
};

TrialScores perturbed_scores(const QapCost& cost, const QapSolverConfig& cfg, Rng& rng) {
  const std::size_t n = cost.size();
  TrialScores s;
  s.node = cost.node_cost();
  for (Idx i = 0; i < s.node.rows(); ++i) {
    for (Idx a = 0; a < s.node.cols(); ++a) s.node(i, a) += cfg.noise_coeff * rng.normal();
  }
  s.pair.resize(n * n);
  double c_max = s.node.maxCoeff();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < n; ++a) {
      const auto& nb = cost.target_neighbors(a);
      auto& block = s.pair[i * n + a];
      block.assign(n * nb.size(), 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        for (std::size_t q = 0; q < nb.size(); ++q) {
          const double v = cost.entry(i, a, j, nb[q]) + cfg.noise_coeff * rng.normal();
          block[j * nb.size() + q] = v;
          c_max = std::max(c_max, v);
        }
      }
    }
  }
  if (cfg.update == QapUpdate::score) {
    s.node = (c_max - s.node.array()).matrix();
    for (auto& block : s.pair) {
      for (auto& v : block) v = c_max - v;
    }
  }
  return s;
}

// (A x)_{ia} with the neighbor scan: sum over b for spectral, max for max-pooling.
Matrix apply_affinity(const QapCost& cost, const TrialScores& s, const Matrix& x, QapMethod method) {
  const std::size_t n = cost.size();
  Matrix out = s.node.cwiseProduct(x);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < n; ++a) {
      const auto& nb = cost.target_neighbors(a);
      if (nb.empty()) continue;
      const auto& block = s.pair[i * n + a];
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double* row = block.data() + j * nb.size();
        if (method == QapMethod::spectral) {
          for (std::size_t q = 0; q < nb.size(); ++q) acc += row[q] * x(ix(j), ix(nb[q]));
        } else {
          double best = -std::numeric_limits<double>::infinity();
          for (std::size_t q = 0; q < nb.size(); ++q) best = std::max(best, row[q] * x(ix(j), ix(nb[q])));
          acc += best;
        }
      }
      out(ix(i), ix(a)) += acc;
    }
  }
  return out;
}

QapTrial run_trial(const QapCost& cost, const QapSolverConfig& cfg, std::size_t trial, std::uint64_t seed) {
  const std::size_t n = cost.size();
  QapTrial out;
  out.trial = trial;
  out.seed = seed;
  Rng rng(seed);
  const TrialScores s = perturbed_scores(cost, cfg, rng);
  Matrix x = Matrix::Constant(ix(n), ix(n), 1.0 / static_cast<double>(n));
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    const Matrix ax = apply_affinity(cost, s, x, cfg.method);
    Matrix next = cfg.update == QapUpdate::score ? Matrix(x + cfg.step_size * ax) : Matrix(x - cfg.step_size * ax);
    const double norm = next.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) break;
    next /= norm;
    const double change = (next - x).norm();
    x = std::move(next);
    out.iterations = it + 1;
    if (change < cfg.tolerance) {
      out.converged = true;
      break;
    }
  }
  out.assignment.mapping = hungarian(-x);
  out.nll = cost.objective(out.assignment);
  return out;
}

bool better(double nll, const Assignment& a, double best_nll, const Assignment& best) {
  if (nll != best_nll) return nll < best_nll;
  return a < best;
}

double ged_entry(double alpha, std::size_t d, bool same) {
  const double dd = static_cast<double>(d);
  return same ? -std::log(((dd - 1.0) * alpha + 1.0) / dd) : -std::log((1.0 - alpha) / dd);
}

}  // namespace

QapCost::QapCost(Matrix node_cost, Matrix edge_table, LabeledGraph g1, LabeledGraph g2)
    : node_cost_(std::move(node_cost)), edge_table_(std::move(edge_table)), g1_(std::move(g1)), g2_(std::move(g2)) {
  const std::size_t n = g1_.size();
  if (g2_.size() != n || static_cast<std::size_t>(node_cost_.rows()) != n || static_cast<std::size_t>(node_cost_.cols()) != n) {
    fail(ErrorKind::size_mismatch, "cost matrices and graphs must share the padded slot count");
  }
  if (!node_cost_.allFinite() || !edge_table_.allFinite() || node_cost_.minCoeff() < 0.0 || edge_table_.minCoeff() < 0.0) {
    fail(ErrorKind::invalid_parameter, "costs must be finite and non-negative");
  }
  neighbors_.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (b != a && g2_.edge(a, b) != g2_.no_edge()) neighbors_[a].push_back(b);
    }
  }
}

double QapCost::entry(std::size_t i, std::size_t a, std::size_t j, std::size_t b) const {
  if (i == j && a == b) return node_cost_(ix(i), ix(a));
  if (i == j || a == b) return 0.0;
  return 0.5 * edge_table_(ix(g1_.edge(i, j)), ix(g2_.edge(a, b)));
}

double QapCost::objective(const Assignment& sigma) const {
  const std::size_t n = size();
  if (sigma.mapping.size() != n || !sigma.is_bijection()) fail(ErrorKind::invalid_assignment, "assignment must be a bijection");
  const auto& m = sigma.mapping;
  double f = 0.0;
  for (std::size_t i = 0; i < n; ++i) f += node_cost_(ix(i), ix(m[i]));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) f += edge_table_(ix(g1_.edge(i, j)), ix(g2_.edge(m[i], m[j])));
  }
  return f;
}

QapCost build_qap_cost(const GraphReference& ref, const LabeledGraph& g1, const LabeledGraph& g2) {
  g1.validate(ref.vocab);
  g2.validate(ref.vocab);
  const std::size_t n = std::max(g1.size(), g2.size());
  auto a = g1.padded(n, ref.vocab.dummy_node());
  auto b = g2.padded(n, ref.vocab.dummy_node());
  const std::size_t steps = ref.node_schedule.steps();
  const Matrix cv = -ref.node_kernel(0, steps).array().log();
  const Matrix ce = -ref.edge_kernel(0, steps).array().log();
  Matrix node(ix(n), ix(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) node(ix(i), ix(k)) = cv(ix(a.node(i)), ix(b.node(k)));
  }
  return QapCost(std::move(node), ce, std::move(a), std::move(b));
}

std::string to_string(QapMethod m) { return m == QapMethod::spectral ? "SM" : "MPM"; }

QapMethod qap_method_from_string(const std::string& s) {
  if (s == "SM") return QapMethod::spectral;
  if (s == "MPM") return QapMethod::max_pooling;
  fail(ErrorKind::validation, "unknown QAP method '" + s + "' (expected SM or MPM)");
}

std::string to_string(QapUpdate u) { return u == QapUpdate::score ? "score" : "literal"; }

QapUpdate qap_update_from_string(const std::string& s) {
  if (s == "score") return QapUpdate::score;
  if (s == "literal") return QapUpdate::literal;
  fail(ErrorKind::validation, "unknown QAP update '" + s + "' (expected score or literal)");
}

void QapSolverConfig::validate() const {
  if (!(tolerance > 0.0)) fail(ErrorKind::validation, "tolerance must be positive");
  if (n_trials < 1) fail(ErrorKind::validation, "n_trials must be at least 1");
  if (!(noise_coeff >= 0.0)) fail(ErrorKind::validation, "noise_coeff must be non-negative");
  if (!(step_size > 0.0)) fail(ErrorKind::validation, "step_size must be positive");
}

QapResult solve_qap(const QapCost& cost, const QapSolverConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<QapTrial> trials(cfg.n_trials);
  std::size_t workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, cfg.n_trials);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t t = next++; t < cfg.n_trials; t = next++) trials[t] = run_trial(cost, cfg, t, mix_seed(seed, t));
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  QapResult out;
  out.assignment = trials.front().assignment;
  out.nll = trials.front().nll;
  for (const auto& t : trials) {
    if (better(t.nll, t.assignment, out.nll, out.assignment)) {
      out.nll = t.nll;
      out.assignment = t.assignment;
    }
  }
  out.trials = std::move(trials);
  return out;
}

QapResult exhaustive_qap(const QapCost& cost) {
  const std::size_t n = cost.size();
  if (n > kExhaustiveQapCap) {
    fail(ErrorKind::cap_exceeded, "exhaustive search limited to " + std::to_string(kExhaustiveQapCap) + " slots");
  }
  Assignment sigma = Assignment::identity(n);
  QapResult out;
  out.assignment = sigma;
  out.nll = cost.objective(sigma);
  // Sums over different permutations round differently; treat near-ties as ties.
  const double tie = 1e-12 * std::max(1.0, out.nll);
  while (std::next_permutation(sigma.mapping.begin(), sigma.mapping.end())) {
    const double f = cost.objective(sigma);
    if (f < out.nll - tie) {
      out.nll = f;
      out.assignment = sigma;
    }
  }
  return out;
}

std::vector<std::size_t> hungarian(const Matrix& cost) {
  if (cost.rows() != cost.cols()) fail(ErrorKind::size_mismatch, "hungarian expects a square matrix");
  const std::size_t n = static_cast<std::size_t>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; p[j] is the row matched to column j, column 0 is a sentinel.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(ix(i0 - 1), ix(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

GedCost ged_cost(const GraphVocab& vocab, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::invalid_parameter, "alpha must lie in (0, 1)");
  if (!vocab.node_prior().is_uniform() || !vocab.edge_prior().is_uniform()) {
    fail(ErrorKind::non_uniform_prior, "edit-cost tables require uniform priors");
  }
  auto table = [alpha](std::size_t d) {
    Matrix c(ix(d), ix(d));
    for (std::size_t x = 0; x < d; ++x) {
      for (std::size_t y = 0; y < d; ++y) c(ix(x), ix(y)) = ged_entry(alpha, d, x == y);
    }
    return c;
  };
  return {table(vocab.node_cardinality()), table(vocab.edge_cardinality())};
}

GedAffinityReport verify_ged_nll_affinity(const GraphReference& ref, const LabeledGraph& g1, const LabeledGraph& g2) {
  const auto& vocab = ref.vocab;
  if (!vocab.node_prior().is_uniform() || !vocab.edge_prior().is_uniform()) {
    fail(ErrorKind::non_uniform_prior, "edit-cost affinity requires uniform priors");
  }
  const std::size_t n = std::max(g1.size(), g2.size());
  if (n > kGedAffinityCap) fail(ErrorKind::cap_exceeded, "affinity check limited to " + std::to_string(kGedAffinityCap) + " slots");
  const auto a = g1.padded(n, vocab.dummy_node());
  const auto b = g2.padded(n, vocab.dummy_node());
  const std::size_t steps = ref.node_schedule.steps();
  const GedCost node_tables = ged_cost(vocab, ref.node_schedule.retention(0, steps));
  const GedCost edge_tables = ged_cost(vocab, ref.edge_schedule.retention(0, steps));
  const double cv_id = node_tables.node(0, 0), cv_sub = node_tables.node(0, 1);
  const double ce_id = edge_tables.edge(0, 0), ce_sub = edge_tables.edge(0, 1);

  GedAffinityReport rep;
  rep.min_nll = std::numeric_limits<double>::infinity();
  rep.min_mismatch = std::numeric_limits<std::size_t>::max();
  std::vector<std::pair<Assignment, double>> nlls;
  std::vector<std::pair<Assignment, std::size_t>> mismatches;
  Assignment sigma = Assignment::identity(n);
  do {
    const double nll = pair_nll(ref, a, b, sigma);
    std::size_t node_mis = 0, edge_mis = 0;
    const auto& m = sigma.mapping;
    for (std::size_t i = 0; i < n; ++i) node_mis += a.node(i) != b.node(m[i]);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) edge_mis += a.edge(i, j) != b.edge(m[i], m[j]);
    }
    const double pairs = static_cast<double>(n * (n - 1) / 2);
    const double table = cv_sub * static_cast<double>(node_mis) + cv_id * static_cast<double>(n - node_mis) +
                         ce_sub * static_cast<double>(edge_mis) + ce_id * (pairs - static_cast<double>(edge_mis));
    rep.affine_residual = std::max(rep.affine_residual, std::abs(nll - table));
    const std::size_t mis = node_mis + edge_mis;
    nlls.emplace_back(sigma, nll);
    mismatches.emplace_back(sigma, mis);
    rep.min_nll = std::min(rep.min_nll, nll);
    rep.min_mismatch = std::min(rep.min_mismatch, mis);
  } while (std::next_permutation(sigma.mapping.begin(), sigma.mapping.end()));

  const double tie = 1e-9 * std::max(1.0, rep.min_nll);
  for (const auto& [s, v] : nlls) {
    if (v <= rep.min_nll + tie) rep.nll_argmin.push_back(s);
  }
  for (const auto& [s, v] : mismatches) {
    if (v == rep.min_mismatch) rep.mismatch_argmin.push_back(s);
  }
  rep.argmin_equal = rep.nll_argmin == rep.mismatch_argmin;
  return rep;
}

}  // namespace dsb
