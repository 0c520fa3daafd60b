#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dsb/bridge.hpp"
#include "dsb/eot_oracle.hpp"
#include "dsb/error.hpp"
#include "dsb/graph_domain.hpp"
#include "dsb/imf_solver.hpp"
#include "dsb/qap_matching.hpp"
#include "dsb/tabular_learner.hpp"

namespace py = pybind11;
using namespace dsb;

namespace {

std::shared_ptr<const ReferenceProcess> categorical(const NoiseSchedule& s, const Vector& prior) {
  return std::make_shared<const ReferenceProcess>(ReferenceProcess::categorical(s, Prior(prior)));
}

Direction direction_from(const std::string& s) {
  if (s == "forward") return Direction::forward;
  if (s == "backward") return Direction::backward;
  fail(ErrorKind::validation, "direction must be forward or backward");
}

py::dict imf(const Vector& gamma, const Vector& xi, const NoiseSchedule& s, const Vector& prior, std::size_t max_iters,
             bool alternate) {
  const auto ref = categorical(s, prior);
  const auto oracle = static_sb_sinkhorn(gamma, xi, *ref);
  const auto res = run_imf(gamma, xi, Coupling::independent(gamma, xi), ref,
                           {.max_iters = max_iters, .alternate_direction = alternate}, oracle.coupling);
  std::vector<double> kl, tv;
  for (const auto& r : res.trace.records) {
    kl.push_back(r.kl_to_oracle);
    tv.push_back(r.tv_change);
  }
  py::dict out;
  out["coupling"] = res.coupling.matrix();
  out["oracle"] = oracle.coupling.matrix();
  out["tv_to_oracle"] = total_variation(res.coupling.matrix(), oracle.coupling.matrix());
  out["kl_to_oracle"] = kl;
  out["tv_change"] = tv;
  out["converged"] = res.converged;
  out["monotone"] = imf_diagnostics(res.trace).monotone;
  return out;
}

struct GraphPair {
  GraphVocab vocab;
  LabeledGraph g1;
  LabeledGraph g2;
};

GraphPair parse_pair(const std::string& vocab, const std::string& g1, const std::string& g2) {
  auto v = vocab_from_json(nlohmann::json::parse(vocab));
  auto a = graph_from_json(nlohmann::json::parse(g1), v);
  auto b = graph_from_json(nlohmann::json::parse(g2), v);
  return {std::move(v), std::move(a), std::move(b)};
}

py::dict match(const std::string& vocab, const std::string& g1, const std::string& g2, const NoiseSchedule& s,
               const std::string& method, std::size_t n_trials, double noise_coeff, std::uint64_t seed, bool exhaustive) {
  const auto p = parse_pair(vocab, g1, g2);
  const GraphReference ref(p.vocab, s);
  const auto cost = build_qap_cost(ref, p.g1, p.g2);
  const QapSolverConfig cfg{.method = qap_method_from_string(method), .noise_coeff = noise_coeff, .n_trials = n_trials};
  const auto res = exhaustive ? exhaustive_qap(cost) : solve_qap(cost, cfg, seed);
  py::dict out;
  out["mapping"] = res.assignment.mapping;
  out["nll"] = res.nll;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Discrete Schrodinger bridge engine";

  py::register_exception<Error>(m, "DsbError", PyExc_ValueError);

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def_static("from_alpha_bar", &NoiseSchedule::from_alpha_bar, py::arg("tau"), py::arg("alpha_bar"))
      .def_property_readonly("steps", &NoiseSchedule::steps)
      .def_property_readonly("tau", &NoiseSchedule::tau)
      .def_property_readonly("alpha_bar", &NoiseSchedule::alpha_bar_values)
      .def("retention", &NoiseSchedule::retention, py::arg("start"), py::arg("end"));

  m.def(
      "build_schedule",
      [](std::size_t n_steps, double alpha_min, double tau, double s_offset) {
        return build_schedule({.n_steps = n_steps, .alpha_min = alpha_min, .tau = tau, .s_offset = s_offset});
      },
      py::arg("n_steps") = 100, py::arg("alpha_min") = 0.999, py::arg("tau") = 1.0, py::arg("s_offset") = 0.008);

  m.def("categorical_kernel", &categorical_kernel, py::arg("retention"), py::arg("prior"));
  m.def(
      "reference_kernel",
      [](const NoiseSchedule& s, const Vector& prior, std::size_t start, std::size_t end) {
        return reference_kernel(s, Prior(prior), start, end).entries;
      },
      py::arg("schedule"), py::arg("prior"), py::arg("start"), py::arg("end"));
  m.def(
      "reference_rate",
      [](const NoiseSchedule& s, const Vector& prior, std::size_t k) { return reference_rate(s, Prior(prior), k).entries; },
      py::arg("schedule"), py::arg("prior"), py::arg("step"));
  m.def(
      "pinned_kernel",
      [](const NoiseSchedule& s, const Vector& prior, std::size_t start, std::size_t end, std::size_t z) {
        return pinned_kernel(s, Prior(prior), start, end, z).entries;
      },
      py::arg("schedule"), py::arg("prior"), py::arg("start"), py::arg("end"), py::arg("endpoint"));
  m.def(
      "sample_bridge",
      [](const NoiseSchedule& s, const Vector& prior, std::size_t x0, std::size_t z, std::uint64_t seed) {
        const auto ref = ReferenceProcess::categorical(s, Prior(prior));
        Rng rng(seed);
        return BridgeSampler(ref, z).sample_states(x0, rng);
      },
      py::arg("schedule"), py::arg("prior"), py::arg("x0"), py::arg("endpoint"), py::arg("seed"),
      "Grid-resolution bridge trajectory from x0 to the endpoint.");

  m.def(
      "sinkhorn",
      [](const Vector& gamma, const Vector& xi, const NoiseSchedule& s, const Vector& prior) {
        return static_sb_sinkhorn(gamma, xi, *categorical(s, prior)).coupling.matrix();
      },
      py::arg("gamma"), py::arg("xi"), py::arg("schedule"), py::arg("prior"));
  m.def("run_imf", &imf, py::arg("gamma"), py::arg("xi"), py::arg("schedule"), py::arg("prior"), py::arg("max_iters") = 50,
        py::arg("alternate_direction") = true);
  m.def(
      "kl_couplings", [](const Matrix& a, const Matrix& b) { return kl_couplings(Coupling(a), Coupling(b)); }, py::arg("a"),
      py::arg("b"));

  m.def(
      "pair_nll_json",
      [](const std::string& vocab, const std::string& g1, const std::string& g2, const NoiseSchedule& s,
         std::vector<std::size_t> mapping) {
        const auto p = parse_pair(vocab, g1, g2);
        return pair_nll(GraphReference(p.vocab, s), p.g1, p.g2, Assignment{std::move(mapping)});
      },
      py::arg("vocab"), py::arg("g1"), py::arg("g2"), py::arg("schedule"), py::arg("mapping"));
  m.def("match_json", &match, py::arg("vocab"), py::arg("g1"), py::arg("g2"), py::arg("schedule"), py::arg("method") = "MPM",
        py::arg("n_trials") = 10, py::arg("noise_coeff") = 1e-6, py::arg("seed") = 0, py::arg("exhaustive") = false);
  m.def("hungarian", &hungarian, py::arg("cost"));

  m.def(
      "train_tabular",
      [](const Matrix& coupling, const NoiseSchedule& s, const Vector& prior, const std::string& direction,
         double learning_rate, std::size_t n_epochs) {
        const auto res = train(TabularPredictor(s.steps(), static_cast<std::size_t>(coupling.rows())), Coupling(coupling),
                               categorical(s, prior), {.learning_rate = learning_rate, .n_epochs = n_epochs},
                               direction_from(direction));
        std::vector<double> curve;
        for (const auto& p : res.curve) curve.push_back(p.loss);
        py::dict out;
        out["kernel_error"] = res.kernel_error;
        out["diverged"] = res.diverged;
        out["loss_curve"] = curve;
        return out;
      },
      py::arg("coupling"), py::arg("schedule"), py::arg("prior"), py::arg("direction") = "forward",
      py::arg("learning_rate") = 1e-2, py::arg("n_epochs") = 5000);
  m.def(
      "gradient_check",
      [](const Matrix& coupling, const NoiseSchedule& s, const Vector& prior, const std::string& direction,
         std::size_t n_coords, double h, std::uint64_t seed) {
        const LearningProblem problem(Coupling(coupling), categorical(s, prior), direction_from(direction));
        TabularPredictor pred(s.steps(), problem.dim());
        Rng rng(seed);
        for (std::size_t k = 0; k < pred.steps(); ++k)
          for (Eigen::Index i = 0; i < pred.logits(k).size(); ++i) pred.logits(k).data()[i] = rng.uniform() - 0.5;
        return gradient_check(pred, problem, n_coords, h, mix_seed(seed, 1)).max_relative_error;
      },
      py::arg("coupling"), py::arg("schedule"), py::arg("prior"), py::arg("direction") = "forward",
      py::arg("n_coords") = 100, py::arg("h") = 1e-5, py::arg("seed") = 0);
}
