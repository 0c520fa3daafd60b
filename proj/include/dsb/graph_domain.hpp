#pragma once

// Categorical graphs and the factorized reference process on them: every node
// slot and every unordered pair of slots evolves independently under its own
// categorical kernel, so graph-level kernels are products of per-element ones.

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsb/state_process.hpp"

namespace dsb {

class GraphVocab {
 public:
  /// dummy_node / no_edge index the padding node label and the absent-edge label.
  GraphVocab(std::vector<std::string> node_labels, std::vector<std::string> edge_labels, Prior node_prior,
             Prior edge_prior, std::size_t dummy_node = 0, std::size_t no_edge = 0);

  static GraphVocab uniform(std::vector<std::string> node_labels, std::vector<std::string> edge_labels);

  std::size_t node_cardinality() const noexcept { return node_labels_.size(); }
  std::size_t edge_cardinality() const noexcept { return edge_labels_.size(); }
  const std::vector<std::string>& node_labels() const noexcept { return node_labels_; }
  const std::vector<std::string>& edge_labels() const noexcept { return edge_labels_; }
  const Prior& node_prior() const noexcept { return node_prior_; }
  const Prior& edge_prior() const noexcept { return edge_prior_; }
  std::size_t dummy_node() const noexcept { return dummy_node_; }
  std::size_t no_edge() const noexcept { return no_edge_; }

  std::size_t node_index(const std::string& label) const;
  std::size_t edge_index(const std::string& label) const;

 private:
  std::vector<std::string> node_labels_;
  std::vector<std::string> edge_labels_;
  Prior node_prior_;
  Prior edge_prior_;
  std::size_t dummy_node_;
  std::size_t no_edge_;
};

/// n node slots with labels and a symmetric edge-label matrix whose diagonal
/// holds the no-edge label.
class LabeledGraph {
 public:
  LabeledGraph(std::vector<std::size_t> nodes, std::vector<std::size_t> edges, std::size_t no_edge);

  /// All slots dummy-free and no edges.
  static LabeledGraph empty(std::vector<std::size_t> nodes, std::size_t no_edge);

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t node(std::size_t i) const { return nodes_.at(i); }
  std::size_t edge(std::size_t i, std::size_t j) const { return edges_.at(i * size() + j); }
  std::size_t no_edge() const noexcept { return no_edge_; }
  const std::vector<std::size_t>& nodes() const noexcept { return nodes_; }

  void set_edge(std::size_t i, std::size_t j, std::size_t label);

  /// Appends dummy slots up to n.
  LabeledGraph padded(std::size_t n, std::size_t dummy_node) const;

  /// Graph whose slot i holds slot mapping[i] of this graph.
  LabeledGraph relabeled(const std::vector<std::size_t>& mapping) const;

  /// Dummy slots carry only no-edge labels.
  bool padding_consistent(std::size_t dummy_node) const;

  /// Checks labels against the vocabulary cardinalities.
  void validate(const GraphVocab& vocab) const;

  friend bool operator==(const LabeledGraph&, const LabeledGraph&) = default;

 private:
  std::vector<std::size_t> nodes_;
  std::vector<std::size_t> edges_;
  std::size_t no_edge_;
};

/// Node correspondence: slot i of the first graph maps to slot mapping[i] of
/// the second.
struct Assignment {
  std::vector<std::size_t> mapping;

  static Assignment identity(std::size_t n);
  bool is_bijection() const;
  friend auto operator<=>(const Assignment&, const Assignment&) = default;
};

/// Vocabulary plus per-element schedules (shared by default).
struct GraphReference {
  GraphReference(GraphVocab vocab, NoiseSchedule schedule);
  GraphReference(GraphVocab vocab, NoiseSchedule node_schedule, NoiseSchedule edge_schedule);

  GraphVocab vocab;
  NoiseSchedule node_schedule;
  NoiseSchedule edge_schedule;

  Matrix node_kernel(std::size_t s, std::size_t t) const;
  Matrix edge_kernel(std::size_t s, std::size_t t) const;
};

/// prod_i P^V(v1_i, v2_i) * prod_{i<j} P^E(e1_ij, e2_ij).
double graph_kernel(const GraphReference& ref, const LabeledGraph& g1, const LabeledGraph& g2, std::size_t s,
                    std::size_t t);

/// -log graph_kernel(g1, sigma(g2), 0, tau), summed element by element.
/// Pads both graphs to a common slot count first.
double pair_nll(const GraphReference& ref, const LabeledGraph& g1, const LabeledGraph& g2, const Assignment& sigma);

/// Number of node slots plus unordered slot pairs whose labels differ under sigma.
std::size_t edit_mismatch(const LabeledGraph& g1, const LabeledGraph& g2, const Assignment& sigma);

/// Every labelling of n slots, indexed in mixed radix (last element fastest).
class FlatGraphSpace {
 public:
  FlatGraphSpace(GraphVocab vocab, std::size_t n, std::vector<LabeledGraph> graphs);

  std::size_t size() const noexcept { return graphs_.size(); }
  std::size_t slots() const noexcept { return n_; }
  const GraphVocab& vocab() const noexcept { return vocab_; }
  const LabeledGraph& graph(std::size_t index) const { return graphs_.at(index); }
  std::size_t index_of(const LabeledGraph& g) const;

  StateSpace state_space() const;

  /// Reference process on flattened indices: the product of element kernels.
  ReferenceProcess reference(const GraphReference& ref) const;

 private:
  GraphVocab vocab_;
  std::size_t n_;
  std::vector<LabeledGraph> graphs_;
};

inline constexpr std::size_t kDefaultGraphSpaceCap = 10000;

FlatGraphSpace enumerate_graph_space(const GraphVocab& vocab, std::size_t n, std::size_t cap = kDefaultGraphSpaceCap);

/// {"n": int, "nodes": [label, ...], "edges": [[i, j, label], ...]}; absent pairs are no-edge.
LabeledGraph graph_from_json(const nlohmann::json& j, const GraphVocab& vocab);
nlohmann::ordered_json graph_to_json(const LabeledGraph& g, const GraphVocab& vocab);

/// {"node_labels", "edge_labels", "node_prior", "edge_prior"}; optional
/// "dummy_label" / "no_edge_label" default to the first label of each list.
GraphVocab vocab_from_json(const nlohmann::json& j);
nlohmann::ordered_json vocab_to_json(const GraphVocab& vocab);

}  // namespace dsb
