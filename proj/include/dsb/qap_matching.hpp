#pragma once

// Graph matching as a quadratic assignment problem. With x the flattened
// binary assignment matrix, f(x) = x^T A x equals the pair NLL, where
// A_{ia,ia} is the node cost and A_{ia;jb} (i != j, a != b) carries half the
// edge cost so that each unordered pair is counted once.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dsb/graph_domain.hpp"

namespace dsb {

class QapCost {
 public:
  QapCost(Matrix node_cost, Matrix edge_table, LabeledGraph g1, LabeledGraph g2);

  std::size_t size() const noexcept { return static_cast<std::size_t>(node_cost_.rows()); }
  const Matrix& node_cost() const noexcept { return node_cost_; }
  /// -log P^E over edge-label pairs.
  const Matrix& edge_table() const noexcept { return edge_table_; }
  const LabeledGraph& source() const noexcept { return g1_; }
  const LabeledGraph& target() const noexcept { return g2_; }

  /// A_{ia;jb}; zero when i == j or a == b unless both hold (the node cost).
  double entry(std::size_t i, std::size_t a, std::size_t j, std::size_t b) const;

  /// Target slots joined to a by a real edge; dummy slots have none.
  const std::vector<std::size_t>& target_neighbors(std::size_t a) const { return neighbors_.at(a); }

  /// x^T A x for a binary assignment.
  double objective(const Assignment& sigma) const;

 private:
  Matrix node_cost_;
  Matrix edge_table_;
  LabeledGraph g1_;
  LabeledGraph g2_;
  std::vector<std::vector<std::size_t>> neighbors_;
};

/// Pads both graphs to a common slot count and tabulates -log P_{0:tau}.
QapCost build_qap_cost(const GraphReference& ref, const LabeledGraph& g1, const LabeledGraph& g2);

enum class QapMethod { spectral, max_pooling };
/// score: iterate on c_max - cost (larger is better). literal: x - eps * (A x) on raw costs.
enum class QapUpdate { score, literal };

std::string to_string(QapMethod m);
QapMethod qap_method_from_string(const std::string& s);
std::string to_string(QapUpdate u);
QapUpdate qap_update_from_string(const std::string& s);

struct QapSolverConfig {
  QapMethod method = QapMethod::max_pooling;
  QapUpdate update = QapUpdate::score;
  double tolerance = 1e-4;
  std::size_t max_iters = 2500;
  double noise_coeff = 1e-6;
  std::size_t n_trials = 10;
  double step_size = 1.0;
  /// 0 picks the hardware concurrency.
  std::size_t threads = 0;

  void validate() const;
};

struct QapTrial {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  bool converged = false;
  Assignment assignment;
  double nll = 0.0;
};

struct QapResult {
  Assignment assignment;
  double nll = 0.0;
  std::vector<QapTrial> trials;
};

QapResult solve_qap(const QapCost& cost, const QapSolverConfig& cfg, std::uint64_t seed);

inline constexpr std::size_t kExhaustiveQapCap = 8;

/// Global minimum over all bijections; ties go to the lexicographically smallest.
QapResult exhaustive_qap(const QapCost& cost);

/// Minimum-cost perfect matching on a square cost matrix; returns row -> column.
std::vector<std::size_t> hungarian(const Matrix& cost);

/// Substitution-cost tables for uniform priors:
/// c(x, x) = -log(((d - 1) a + 1) / d), c(x, y) = -log((1 - a) / d).
struct GedCost {
  Matrix node;
  Matrix edge;
};
GedCost ged_cost(const GraphVocab& vocab, double alpha);

struct GedAffinityReport {
  std::vector<Assignment> nll_argmin;
  std::vector<Assignment> mismatch_argmin;
  double min_nll = 0.0;
  std::size_t min_mismatch = 0;
  /// Largest |pair_nll - table cost of matched and mismatched elements| over all assignments.
  double affine_residual = 0.0;
  bool argmin_equal = false;
};

inline constexpr std::size_t kGedAffinityCap = 6;

GedAffinityReport verify_ged_nll_affinity(const GraphReference& ref, const LabeledGraph& g1, const LabeledGraph& g2);

}  // namespace dsb
