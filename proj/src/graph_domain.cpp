#include "dsb/graph_domain.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "dsb/error.hpp"

namespace dsb {
namespace {

std::size_t find_label(const std::vector<std::string>& labels, const std::string& label, const char* what) {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) fail(ErrorKind::invalid_parameter, std::string("unknown ") + what + " label '" + label + "'");
  return static_cast<std::size_t>(it - labels.begin());
}

void check_labels(const std::vector<std::string>& labels, const char* what) {
  if (labels.size() < 2) fail(ErrorKind::invalid_parameter, std::string(what) + " vocabulary needs at least 2 labels");
  auto sorted = labels;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    fail(ErrorKind::invalid_parameter, std::string("duplicate ") + what + " label");
  }
}

std::size_t pair_count(std::size_t n) { return n * (n - 1) / 2; }

std::size_t checked_pow(std::size_t base, std::size_t exp, std::size_t cap) {
  std::size_t out = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    if (out > cap / base + 1) return cap + 1;
    out *= base;
  }
  return out;
}

}  // namespace

GraphVocab::GraphVocab(std::vector<std::string> node_labels, std::vector<std::string> edge_labels, Prior node_prior,
                       Prior edge_prior, std::size_t dummy_node, std::size_t no_edge)
    : node_labels_(std::move(node_labels)),
      edge_labels_(std::move(edge_labels)),
      node_prior_(std::move(node_prior)),
      edge_prior_(std::move(edge_prior)),
      dummy_node_(dummy_node),
      no_edge_(no_edge) {
  check_labels(node_labels_, "node");
  check_labels(edge_labels_, "edge");
  if (node_prior_.size() != node_labels_.size()) fail(ErrorKind::size_mismatch, "node prior size != node labels");
  if (edge_prior_.size() != edge_labels_.size()) fail(ErrorKind::size_mismatch, "edge prior size != edge labels");
  if (dummy_node_ >= node_labels_.size()) fail(ErrorKind::invalid_parameter, "dummy label out of range");
  if (no_edge_ >= edge_labels_.size()) fail(ErrorKind::invalid_parameter, "no-edge label out of range");
}

GraphVocab GraphVocab::uniform(std::vector<std::string> node_labels, std::vector<std::string> edge_labels) {
  auto nv = node_labels.size();
  auto ne = edge_labels.size();
  return GraphVocab(std::move(node_labels), std::move(edge_labels), Prior::uniform(nv), Prior::uniform(ne));
}

std::size_t GraphVocab::node_index(const std::string& label) const { return find_label(node_labels_, label, "node"); }
std::size_t GraphVocab::edge_index(const std::string& label) const { return find_label(edge_labels_, label, "edge"); }

LabeledGraph::LabeledGraph(std::vector<std::size_t> nodes, std::vector<std::size_t> edges, std::size_t no_edge)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), no_edge_(no_edge) {
  const std::size_t n = nodes_.size();
  if (edges_.size() != n * n) fail(ErrorKind::size_mismatch, "edge matrix must be n x n");
  for (std::size_t i = 0; i < n; ++i) {
    if (edges_[i * n + i] != no_edge_) fail(ErrorKind::invalid_parameter, "edge diagonal must hold the no-edge label");
    for (std::size_t j = i + 1; j < n; ++j) {
      if (edges_[i * n + j] != edges_[j * n + i]) fail(ErrorKind::invalid_parameter, "edge matrix must be symmetric");
    }
  }
}

LabeledGraph LabeledGraph::empty(std::vector<std::size_t> nodes, std::size_t no_edge) {
  const std::size_t n = nodes.size();
  return LabeledGraph(std::move(nodes), std::vector<std::size_t>(n * n, no_edge), no_edge);
}

void LabeledGraph::set_edge(std::size_t i, std::size_t j, std::size_t label) {
  const std::size_t n = size();
  if (i >= n || j >= n) fail(ErrorKind::invalid_parameter, "edge endpoint out of range");
  if (i == j) {
    if (label != no_edge_) fail(ErrorKind::invalid_parameter, "self-loops are not allowed");
    return;
  }
  edges_[i * n + j] = label;
  edges_[j * n + i] = label;
}

LabeledGraph LabeledGraph::padded(std::size_t n, std::size_t dummy_node) const {
  if (n < size()) fail(ErrorKind::size_mismatch, "cannot pad a graph to fewer slots");
  auto nodes = nodes_;
  nodes.resize(n, dummy_node);
  auto out = empty(std::move(nodes), no_edge_);
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j = i + 1; j < size(); ++j) out.set_edge(i, j, edge(i, j));
  }
  return out;
}

LabeledGraph LabeledGraph::relabeled(const std::vector<std::size_t>& mapping) const {
  const std::size_t n = size();
  if (!Assignment{mapping}.is_bijection() || mapping.size() != n) {
    fail(ErrorKind::invalid_assignment, "relabeling must be a bijection on node slots");
  }
  std::vector<std::size_t> nodes(n);
  for (std::size_t i = 0; i < n; ++i) nodes[i] = nodes_[mapping[i]];
  auto out = empty(std::move(nodes), no_edge_);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) out.set_edge(i, j, edge(mapping[i], mapping[j]));
  }
  return out;
}

bool LabeledGraph::padding_consistent(std::size_t dummy_node) const {
  for (std::size_t i = 0; i < size(); ++i) {
    if (nodes_[i] != dummy_node) continue;
    for (std::size_t j = 0; j < size(); ++j) {
      if (edge(i, j) != no_edge_) return false;
    }
  }
  return true;
}

void LabeledGraph::validate(const GraphVocab& vocab) const {
  if (no_edge_ != vocab.no_edge()) fail(ErrorKind::validation, "graph no-edge label differs from vocabulary");
  for (auto v : nodes_) {
    if (v >= vocab.node_cardinality()) fail(ErrorKind::validation, "node label out of range");
  }
  for (auto e : edges_) {
    if (e >= vocab.edge_cardinality()) fail(ErrorKind::validation, "edge label out of range");
  }
  if (!padding_consistent(vocab.dummy_node())) fail(ErrorKind::validation, "dummy node carries an edge");
}

Assignment Assignment::identity(std::size_t n) {
  Assignment a;
  a.mapping.resize(n);
  for (std::size_t i = 0; i < n; ++i) a.mapping[i] = i;
  return a;
}

bool Assignment::is_bijection() const {
  std::vector<char> seen(mapping.size(), 0);
  for (auto m : mapping) {
    if (m >= mapping.size() || seen[m]) return false;
    seen[m] = 1;
  }
  return true;
}

GraphReference::GraphReference(GraphVocab v, NoiseSchedule schedule)
    : vocab(std::move(v)), node_schedule(schedule), edge_schedule(std::move(schedule)) {}

GraphReference::GraphReference(GraphVocab v, NoiseSchedule node, NoiseSchedule edge)
    : vocab(std::move(v)), node_schedule(std::move(node)), edge_schedule(std::move(edge)) {
  if (node_schedule.steps() != edge_schedule.steps() || node_schedule.tau() != edge_schedule.tau()) {
    fail(ErrorKind::invalid_parameter, "node and edge schedules must share a grid");
  }
}

Matrix GraphReference::node_kernel(std::size_t s, std::size_t t) const {
  return reference_kernel(node_schedule, vocab.node_prior(), s, t).entries;
}

Matrix GraphReference::edge_kernel(std::size_t s, std::size_t t) const {
  return reference_kernel(edge_schedule, vocab.edge_prior(), s, t).entries;
}

double graph_kernel(const GraphReference& ref, const LabeledGraph& g1, const LabeledGraph& g2, std::size_t s,
                    std::size_t t) {
  if (g1.size() != g2.size()) fail(ErrorKind::size_mismatch, "graphs differ in slot count");
  const Matrix pv = ref.node_kernel(s, t);
  const Matrix pe = ref.edge_kernel(s, t);
  const std::size_t n = g1.size();
  double p = 1.0;
  for (std::size_t i = 0; i < n; ++i) p *= pv(static_cast<Eigen::Index>(g1.node(i)), static_cast<Eigen::Index>(g2.node(i)));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      p *= pe(static_cast<Eigen::Index>(g1.edge(i, j)), static_cast<Eigen::Index>(g2.edge(i, j)));
    }
  }
  return p;
}

double pair_nll(const GraphReference& ref, const LabeledGraph& g1, const LabeledGraph& g2, const Assignment& sigma) {
  const std::size_t n = std::max(g1.size(), g2.size());
  if (sigma.mapping.size() != n || !sigma.is_bijection()) {
    fail(ErrorKind::invalid_assignment, "assignment must be a bijection on " + std::to_string(n) + " slots");
  }
  const auto a = g1.padded(n, ref.vocab.dummy_node());
  const auto b = g2.padded(n, ref.vocab.dummy_node());
  const std::size_t steps = ref.node_schedule.steps();
  const Matrix cv = -ref.node_kernel(0, steps).array().log();
  const Matrix ce = -ref.edge_kernel(0, steps).array().log();
  const auto& m = sigma.mapping;
  double nll = 0.0;
  for (std::size_t i = 0; i < n; ++i) nll += cv(static_cast<Eigen::Index>(a.node(i)), static_cast<Eigen::Index>(b.node(m[i])));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      nll += ce(static_cast<Eigen::Index>(a.edge(i, j)), static_cast<Eigen::Index>(b.edge(m[i], m[j])));
    }
  }
  return nll;
}

std::size_t edit_mismatch(const LabeledGraph& g1, const LabeledGraph& g2, const Assignment& sigma) {
  if (g1.size() != g2.size()) fail(ErrorKind::size_mismatch, "pad graphs before counting mismatches");
  const std::size_t n = g1.size();
  if (sigma.mapping.size() != n || !sigma.is_bijection()) fail(ErrorKind::invalid_assignment, "assignment must be a bijection");
  const auto& m = sigma.mapping;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) count += g1.node(i) != g2.node(m[i]);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) count += g1.edge(i, j) != g2.edge(m[i], m[j]);
  }
  return count;
}

FlatGraphSpace::FlatGraphSpace(GraphVocab vocab, std::size_t n, std::vector<LabeledGraph> graphs)
    : vocab_(std::move(vocab)), n_(n), graphs_(std::move(graphs)) {}

std::size_t FlatGraphSpace::index_of(const LabeledGraph& g) const {
  if (g.size() != n_) fail(ErrorKind::size_mismatch, "graph slot count differs from the space");
  std::size_t idx = 0;
  for (std::size_t i = 0; i < n_; ++i) {
    if (g.node(i) >= vocab_.node_cardinality()) fail(ErrorKind::validation, "node label out of range");
    idx = idx * vocab_.node_cardinality() + g.node(i);
  }
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = i + 1; j < n_; ++j) {
      if (g.edge(i, j) >= vocab_.edge_cardinality()) fail(ErrorKind::validation, "edge label out of range");
      idx = idx * vocab_.edge_cardinality() + g.edge(i, j);
    }
  }
  return idx;
}

StateSpace FlatGraphSpace::state_space() const {
  std::vector<std::string> labels;
  labels.reserve(graphs_.size());
  for (const auto& g : graphs_) {
    std::string s;
    for (std::size_t i = 0; i < n_; ++i) s += (i ? "|" : "") + vocab_.node_labels()[g.node(i)];
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = i + 1; j < n_; ++j) s += "|" + vocab_.edge_labels()[g.edge(i, j)];
    }
    labels.push_back(std::move(s));
  }
  if (labels.size() < 2) fail(ErrorKind::invalid_parameter, "graph space has fewer than 2 states");
  return StateSpace(std::move(labels));
}

ReferenceProcess FlatGraphSpace::reference(const GraphReference& ref) const {
  auto graphs = std::make_shared<const std::vector<LabeledGraph>>(graphs_);
  const std::size_t n = n_;
  const auto& sched = ref.node_schedule;
  std::vector<double> times(sched.steps() + 1);
  for (std::size_t k = 0; k <= sched.steps(); ++k) times[k] = sched.time(k);

  auto kernel = [ref, graphs](std::size_t from, std::size_t to) {
    const Matrix pv = ref.node_kernel(from, to);
    const Matrix pe = ref.edge_kernel(from, to);
    const auto size = static_cast<Eigen::Index>(graphs->size());
    Matrix out(size, size);
    for (Eigen::Index a = 0; a < size; ++a) {
      const auto& ga = (*graphs)[static_cast<std::size_t>(a)];
      for (Eigen::Index b = 0; b < size; ++b) {
        const auto& gb = (*graphs)[static_cast<std::size_t>(b)];
        double p = 1.0;
        for (std::size_t i = 0; i < ga.size(); ++i) {
          p *= pv(static_cast<Eigen::Index>(ga.node(i)), static_cast<Eigen::Index>(gb.node(i)));
          for (std::size_t j = i + 1; j < ga.size(); ++j) {
            p *= pe(static_cast<Eigen::Index>(ga.edge(i, j)), static_cast<Eigen::Index>(gb.edge(i, j)));
          }
        }
        out(a, b) = p;
      }
    }
    return out;
  };

  // Independent components: the generator is a sum of one-element generators,
  // nonzero only between graphs that differ in exactly one element.
  auto rate = [ref, graphs, n](std::size_t k) {
    const Matrix av = reference_rate(ref.node_schedule, ref.vocab.node_prior(), k).entries;
    const Matrix ae = reference_rate(ref.edge_schedule, ref.vocab.edge_prior(), k).entries;
    const auto size = static_cast<Eigen::Index>(graphs->size());
    Matrix out = Matrix::Zero(size, size);
    for (Eigen::Index a = 0; a < size; ++a) {
      const auto& ga = (*graphs)[static_cast<std::size_t>(a)];
      for (Eigen::Index b = 0; b < size; ++b) {
        if (a == b) continue;
        const auto& gb = (*graphs)[static_cast<std::size_t>(b)];
        std::size_t diffs = 0;
        double r = 0.0;
        for (std::size_t i = 0; i < n && diffs < 2; ++i) {
          if (ga.node(i) != gb.node(i)) {
            ++diffs;
            r = av(static_cast<Eigen::Index>(ga.node(i)), static_cast<Eigen::Index>(gb.node(i)));
          }
          for (std::size_t j = i + 1; j < n && diffs < 2; ++j) {
            if (ga.edge(i, j) != gb.edge(i, j)) {
              ++diffs;
              r = ae(static_cast<Eigen::Index>(ga.edge(i, j)), static_cast<Eigen::Index>(gb.edge(i, j)));
            }
          }
        }
        if (diffs == 1) out(a, b) = r;
      }
      out(a, a) = -out.row(a).sum();
    }
    return out;
  };

  return ReferenceProcess(std::move(times), kernel, rate);
}

FlatGraphSpace enumerate_graph_space(const GraphVocab& vocab, std::size_t n, std::size_t cap) {
  if (n == 0) fail(ErrorKind::invalid_parameter, "graph space needs at least one slot");
  const std::size_t pairs = pair_count(n);
  const std::size_t nv = checked_pow(vocab.node_cardinality(), n, cap);
  const std::size_t ne = checked_pow(vocab.edge_cardinality(), pairs, cap);
  if (nv > cap || ne > cap || nv * ne > cap) {
    fail(ErrorKind::cap_exceeded, "graph space with " + std::to_string(n) + " nodes exceeds the cap of " + std::to_string(cap));
  }
  const std::size_t total = nv * ne;
  const std::size_t elems = n + pairs;
  std::vector<std::size_t> radix(elems);
  for (std::size_t i = 0; i < elems; ++i) radix[i] = i < n ? vocab.node_cardinality() : vocab.edge_cardinality();

  std::vector<LabeledGraph> graphs;
  graphs.reserve(total);
  std::vector<std::size_t> digits(elems, 0);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    for (std::size_t e = elems; e-- > 0;) {
      digits[e] = rem % radix[e];
      rem /= radix[e];
    }
    auto g = LabeledGraph::empty(std::vector<std::size_t>(digits.begin(), digits.begin() + static_cast<std::ptrdiff_t>(n)),
                                 vocab.no_edge());
    std::size_t e = n;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) g.set_edge(i, j, digits[e++]);
    }
    graphs.push_back(std::move(g));
  }
  return FlatGraphSpace(vocab, n, std::move(graphs));
}

LabeledGraph graph_from_json(const nlohmann::json& j, const GraphVocab& vocab) {
  if (!j.is_object()) fail(ErrorKind::parse, "graph: expected an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "n" && key != "nodes" && key != "edges") fail(ErrorKind::parse, "graph: unknown key '" + key + "'");
  }
  if (!j.contains("n") || !j["n"].is_number_unsigned()) fail(ErrorKind::parse, "graph.n: expected a non-negative integer");
  if (!j.contains("nodes") || !j["nodes"].is_array()) fail(ErrorKind::parse, "graph.nodes: expected an array");
  const auto n = j["n"].get<std::size_t>();
  const auto& jn = j["nodes"];
  if (jn.size() != n) fail(ErrorKind::parse, "graph.nodes: expected " + std::to_string(n) + " labels");
  std::vector<std::size_t> nodes;
  for (std::size_t i = 0; i < n; ++i) {
    if (!jn[i].is_string()) fail(ErrorKind::parse, "graph.nodes[" + std::to_string(i) + "]: expected a label string");
    nodes.push_back(vocab.node_index(jn[i].get<std::string>()));
  }
  auto g = LabeledGraph::empty(std::move(nodes), vocab.no_edge());
  if (j.contains("edges")) {
    const auto& je = j["edges"];
    if (!je.is_array()) fail(ErrorKind::parse, "graph.edges: expected an array");
    for (std::size_t k = 0; k < je.size(); ++k) {
      const auto path = "graph.edges[" + std::to_string(k) + "]";
      const auto& e = je[k];
      if (!e.is_array() || e.size() != 3 || !e[0].is_number_unsigned() || !e[1].is_number_unsigned() || !e[2].is_string()) {
        fail(ErrorKind::parse, path + ": expected [i, j, label]");
      }
      const auto a = e[0].get<std::size_t>();
      const auto b = e[1].get<std::size_t>();
      if (a >= n || b >= n || a == b) fail(ErrorKind::parse, path + ": invalid endpoints");
      g.set_edge(a, b, vocab.edge_index(e[2].get<std::string>()));
    }
  }
  g.validate(vocab);
  return g;
}

nlohmann::ordered_json graph_to_json(const LabeledGraph& g, const GraphVocab& vocab) {
  nlohmann::ordered_json j;
  j["n"] = g.size();
  auto nodes = nlohmann::ordered_json::array();
  for (auto v : g.nodes()) nodes.push_back(vocab.node_labels()[v]);
  j["nodes"] = std::move(nodes);
  auto edges = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t k = i + 1; k < g.size(); ++k) {
      if (g.edge(i, k) != g.no_edge()) edges.push_back({i, k, vocab.edge_labels()[g.edge(i, k)]});
    }
  }
  j["edges"] = std::move(edges);
  return j;
}

GraphVocab vocab_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::parse, "vocab: expected an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "node_labels" && key != "edge_labels" && key != "node_prior" && key != "edge_prior" &&
        key != "dummy_label" && key != "no_edge_label") {
      fail(ErrorKind::parse, "vocab: unknown key '" + key + "'");
    }
  }
  auto strings = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_array()) fail(ErrorKind::parse, std::string("vocab.") + key + ": expected an array");
    std::vector<std::string> out;
    for (const auto& v : j[key]) {
      if (!v.is_string()) fail(ErrorKind::parse, std::string("vocab.") + key + ": expected strings");
      out.push_back(v.get<std::string>());
    }
    return out;
  };
  auto prior = [&](const char* key, std::size_t d) {
    if (!j.contains(key)) return Prior::uniform(d);
    if (!j[key].is_array() || j[key].size() != d) {
      fail(ErrorKind::parse, std::string("vocab.") + key + ": expected " + std::to_string(d) + " numbers");
    }
    Vector m(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
      if (!j[key][i].is_number()) fail(ErrorKind::parse, std::string("vocab.") + key + ": expected numbers");
      m(static_cast<Eigen::Index>(i)) = j[key][i].get<double>();
    }
    try {
      return Prior(m);
    } catch (const Error& e) {
      fail(ErrorKind::validation, std::string("vocab.") + key + ": " + e.what());
    }
  };
  auto node_labels = strings("node_labels");
  auto edge_labels = strings("edge_labels");
  auto pick = [&](const char* key, const std::vector<std::string>& labels) -> std::size_t {
    if (!j.contains(key)) return 0;
    if (!j[key].is_string()) fail(ErrorKind::parse, std::string("vocab.") + key + ": expected a label string");
    const auto it = std::find(labels.begin(), labels.end(), j[key].get<std::string>());
    if (it == labels.end()) fail(ErrorKind::parse, std::string("vocab.") + key + ": label not in the vocabulary");
    return static_cast<std::size_t>(it - labels.begin());
  };
  const auto dummy = pick("dummy_label", node_labels);
  const auto no_edge = pick("no_edge_label", edge_labels);
  auto pv = prior("node_prior", node_labels.size());
  auto pe = prior("edge_prior", edge_labels.size());
  return GraphVocab(std::move(node_labels), std::move(edge_labels), std::move(pv), std::move(pe), dummy, no_edge);
}

nlohmann::ordered_json vocab_to_json(const GraphVocab& vocab) {
  nlohmann::ordered_json j;
  j["node_labels"] = vocab.node_labels();
  j["edge_labels"] = vocab.edge_labels();
  j["node_prior"] = std::vector<double>(vocab.node_prior().probabilities().begin(), vocab.node_prior().probabilities().end());
  j["edge_prior"] = std::vector<double>(vocab.edge_prior().probabilities().begin(), vocab.edge_prior().probabilities().end());
  j["dummy_label"] = vocab.node_labels()[vocab.dummy_node()];
  j["no_edge_label"] = vocab.edge_labels()[vocab.no_edge()];
  return j;
}

}  // namespace dsb
