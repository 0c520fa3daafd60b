// Acceptance suite: one line per criterion, non-zero exit if any fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/support.hpp"
#include "dsb/bridge.hpp"
#include "dsb/eot_oracle.hpp"
#include "dsb/graph_domain.hpp"
#include "dsb/imf_solver.hpp"
#include "dsb/qap_matching.hpp"
#include "dsb/tabular_learner.hpp"

using namespace dsb;
namespace fs = std::filesystem;

namespace {

// Tolerances and limits.
constexpr double kSchedule095Lo = 0.945, kSchedule095Hi = 0.955;
constexpr double kSchedule090Lo = 0.895, kSchedule090Hi = 0.905;
constexpr double kChapmanKolmogorovTol = 1e-12;
constexpr double kRatioLo = 3.5, kRatioHi = 4.5;
constexpr double kMarginalTvTol = 1e-10;
constexpr double kPythagoreanTol = 1e-8;
constexpr double kImfTvTol = 1e-4;
constexpr std::size_t kImfMaxIters = 50;
constexpr double kMonotoneSlack = 1e-10;
constexpr double kFactorizationTol = 1e-12;
constexpr double kRecoveryNllTol = 1e-2;
constexpr double kExhaustiveRate = 0.95;
constexpr double kExhaustiveTieTol = 1e-9;
constexpr double kGradientTol = 1e-4;
constexpr double kKernelErrorTol = 1e-2;
constexpr double kApproxImfTvTol = 5e-2;
constexpr std::size_t kApproxImfOuter = 6;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

bool run_criterion(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = limit_s <= 0.0 || secs < limit_s;
  const bool pass = o.pass && in_time;
  std::string timing = fmt("%.2f s", secs);
  if (limit_s > 0.0) timing += fmt(" (limit %g s)", limit_s);
  std::printf("[%s] %d. %s: %s; %s\n", pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), timing.c_str());
  std::fflush(stdout);
  return pass;
}

NoiseSchedule ratio_schedule(double r) { return NoiseSchedule::from_alpha_bar(1.0, {1.0, std::sqrt(r), r}); }

LabeledGraph random_graph(Rng& rng, const GraphVocab& vocab, std::size_t n, double edge_p) {
  std::vector<std::size_t> nodes(n);
  for (auto& v : nodes) v = 1 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(vocab.node_cardinality() - 1));
  auto g = LabeledGraph::empty(nodes, vocab.no_edge());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < edge_p)
        g.set_edge(i, j, 1 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(vocab.edge_cardinality() - 1)));
  return g;
}

/// Uniform-prior graph where every slot and pair label is drawn uniformly.
LabeledGraph uniform_graph(Rng& rng, const GraphVocab& vocab, std::size_t n) {
  std::vector<std::size_t> nodes(n);
  for (auto& v : nodes) v = static_cast<std::size_t>(rng.uniform() * static_cast<double>(vocab.node_cardinality()));
  auto g = LabeledGraph::empty(nodes, vocab.no_edge());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      g.set_edge(i, j, static_cast<std::size_t>(rng.uniform() * static_cast<double>(vocab.edge_cardinality())));
  return g;
}

std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[static_cast<std::size_t>(rng.uniform() * static_cast<double>(i))]);
  return p;
}

struct ImfCheck {
  double tv = 0.0;
  std::size_t iterations = 0;
  bool monotone = false;
};

ImfCheck imf_vs_oracle(const Vector& g, const Vector& x, std::shared_ptr<const ReferenceProcess> ref) {
  const auto sb = static_sb_sinkhorn(g, x, *ref);
  const auto res = run_imf(g, x, Coupling::independent(g, x), ref, {.max_iters = kImfMaxIters}, sb.coupling);
  return {total_variation(res.coupling.matrix(), sb.coupling.matrix()), res.trace.records.size(),
          imf_diagnostics(res.trace, kMonotoneSlack).monotone && sb.converged};
}

Outcome schedule_fidelity() {
  const double a = build_schedule({.n_steps = 100, .alpha_min = 0.999}).alpha_bar(100);
  const double b = build_schedule({.n_steps = 100, .alpha_min = 0.99795}).alpha_bar(100);
  const bool ok = a >= kSchedule095Lo && a <= kSchedule095Hi && b >= kSchedule090Lo && b <= kSchedule090Hi;
  return {ok, fmt("alpha_bar(tau) = %.4f for alpha_min 0.999, %.4f for 0.99795", a, b)};
}

Outcome process_algebra() {
  Rng rng(2);
  const auto s = build_schedule({.n_steps = 100, .alpha_min = 0.99});
  const Prior prior(test::random_simplex(rng, 4));
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    std::size_t t[3];
    for (auto& v : t) v = static_cast<std::size_t>(rng.uniform() * 101.0);
    std::sort(t, t + 3);
    const Matrix direct = reference_kernel(s, prior, t[0], t[2]).entries;
    const Matrix composed = reference_kernel(s, prior, t[0], t[1]).entries * reference_kernel(s, prior, t[1], t[2]).entries;
    worst = std::max(worst, test::max_abs(direct - composed));
  }
  const double ratio = test::one_step_error(64) / test::one_step_error(128);
  const double pinned_ratio = test::one_step_error(64, 1) / test::one_step_error(128, 1);
  const auto in = [](double r) { return r >= kRatioLo && r <= kRatioHi; };
  return {worst < kChapmanKolmogorovTol && in(ratio) && in(pinned_ratio),
          fmt("CK max error %.2e over 1000 triples; error ratio %.3f (reference), %.3f (pinned)", worst, ratio, pinned_ratio)};
}

Outcome projection_theorems() {
  Rng rng(3);
  const auto ref = test::categorical_ref(build_schedule({.n_steps = 50, .alpha_min = 0.99}), Prior::uniform(3));
  double tv = 0.0, pyth = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const ReciprocalMeasure rec(test::random_coupling(rng, 3), ref);
    const auto fwd = markov_projection(rec);
    const auto bwd = markov_projection_reverse(rec);
    for (std::size_t k = 0; k <= 50; ++k) {
      const Vector target = reciprocal_marginal(rec, k);
      tv = std::max({tv, total_variation(target, fwd.marginal(k)), total_variation(target, bwd.marginal(k))});
    }
    const auto other = test::random_chain(rng, 3, 50);
    const double lhs = kl_reciprocal_to_markov(rec, other);
    const double rhs = kl_reciprocal_to_markov(rec, fwd) + kl_markov_paths(fwd, other);
    pyth = std::max(pyth, std::abs(lhs - rhs));
  }
  return {tv < kMarginalTvTol && pyth < kPythagoreanTol,
          fmt("max marginal TV %.2e; max Pythagorean gap %.2e (d=3, 50 steps, 10 couplings)", tv, pyth)};
}

Outcome sb_convergence() {
  const auto ref = test::categorical_ref(build_schedule({.n_steps = 100, .alpha_min = 0.99}), Prior::uniform(5));
  bool ok = true;
  double worst = 0.0;
  std::size_t iters = 0;
  for (std::uint64_t seed : {41, 42, 43}) {
    Rng rng(seed);
    const auto c = imf_vs_oracle(test::random_simplex(rng, 5), test::random_simplex(rng, 5), ref);
    ok = ok && c.tv < kImfTvTol && c.monotone && c.iterations <= kImfMaxIters;
    worst = std::max(worst, c.tv);
    iters = std::max(iters, c.iterations);
  }
  return {ok, fmt("worst TV to Sinkhorn %.2e within %zu iterations, KL non-increasing: %s (3 instances, d=5)", worst, iters,
                  ok ? "yes" : "no")};
}

Outcome graph_sb() {
  const auto vocab = GraphVocab::uniform({"dummy", "C"}, {"none", "bond"});
  const auto space = enumerate_graph_space(vocab, 2);
  const GraphReference gref(vocab, build_schedule({.n_steps = 100, .alpha_min = 0.99}));
  const auto ref = std::make_shared<const ReferenceProcess>(space.reference(gref));
  double fact = 0.0;
  for (std::size_t s : {0, 13, 50, 99})
    for (std::size_t t : {s, s + 1, std::size_t{100}}) {
      const Matrix k = ref->kernel(s, t);
      for (std::size_t i = 0; i < space.size(); ++i)
        for (std::size_t j = 0; j < space.size(); ++j)
          fact = std::max(fact, std::abs(k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -
                                         graph_kernel(gref, space.graph(i), space.graph(j), s, t)));
    }
  Rng rng(5);
  const auto c = imf_vs_oracle(test::random_simplex(rng, 8), test::random_simplex(rng, 8), ref);
  const bool ok = space.size() == 8 && fact < kFactorizationTol && c.tv < kImfTvTol && c.monotone;
  return {ok, fmt("%zu states; factorization error %.2e; TV to Sinkhorn %.2e after %zu iterations, monotone: %s", space.size(),
                  fact, c.tv, c.iterations, c.monotone ? "yes" : "no")};
}

Outcome qap_protocol() {
  // Recovery of permuted copies with the published solver setting.
  const auto mol = GraphVocab::uniform({"dummy", "C", "N", "O"}, {"none", "single", "double"});
  const GraphReference mref(mol, ratio_schedule(0.3));
  const QapSolverConfig ours{};
  Rng rng(6);
  std::size_t recovered = 0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 11.0);
    const auto g = random_graph(rng, mol, n, 0.3);
    const auto permuted = g.relabeled(random_permutation(rng, n));
    const double target = pair_nll(mref, g, g, Assignment::identity(n));
    const auto res = solve_qap(build_qap_cost(mref, g, permuted), ours, t);
    recovered += std::abs(res.nll - target) < kRecoveryNllTol;
  }
  // Agreement with exhaustive search on small random pairs.
  const auto bin = GraphVocab::uniform({"dummy", "C"}, {"none", "bond"});
  const GraphReference bref(bin, ratio_schedule(0.3));
  const QapSolverConfig restart{.noise_coeff = 0.1, .n_trials = 100};
  std::size_t agree = 0;
  for (std::uint64_t t = 0; t < 200; ++t) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 5.0);
    const auto cost = build_qap_cost(bref, random_graph(rng, bin, n, 0.4), random_graph(rng, bin, n, 0.4));
    agree += std::abs(solve_qap(cost, restart, t).nll - exhaustive_qap(cost).nll) < kExhaustiveTieTol;
  }
  const bool ok = recovered == 100 && static_cast<double>(agree) >= kExhaustiveRate * 200.0;
  return {ok, fmt("recovered %zu/100 permuted graphs (n <= 12); exhaustive optimum matched on %zu/200 (n <= 6)", recovered, agree)};
}

Outcome ged_affinity() {
  const auto vocab = GraphVocab::uniform({"a", "b", "c"}, {"none", "x", "y"});
  const GraphReference ref(vocab, ratio_schedule(0.3));
  Rng rng(7);
  std::size_t equal = 0;
  double residual = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto r = verify_ged_nll_affinity(ref, uniform_graph(rng, vocab, 5), uniform_graph(rng, vocab, 5));
    equal += r.argmin_equal;
    residual = std::max(residual, r.affine_residual);
  }
  return {equal == 100, fmt("argmin sets equal on %zu/100 pairs (n=5, d_V=d_E=3); max affine residual %.2e", equal, residual)};
}

Outcome learner() {
  const auto ref = test::categorical_ref(build_schedule({.n_steps = 100, .alpha_min = 0.99}), Prior::uniform(3));
  Rng rng(8);
  const auto pi = test::random_coupling(rng, 3);
  double grad_err = 0.0;
  for (auto dir : {Direction::forward, Direction::backward}) {
    TabularPredictor pred(100, 3);
    for (std::size_t k = 0; k < 100; ++k)
      for (Eigen::Index i = 0; i < 9; ++i) pred.logits(k).data()[i] = 2.0 * (rng.uniform() - 0.5);
    grad_err = std::max(grad_err, gradient_check(pred, LearningProblem(pi, ref, dir), 100, 1e-5, 9).max_relative_error);
  }
  const auto trained = train(TabularPredictor(100, 3), pi, ref, {.learning_rate = 1e-2, .n_epochs = 5000}, Direction::forward);

  const auto ref5 = test::categorical_ref(build_schedule({.n_steps = 100, .alpha_min = 0.99}), Prior::uniform(5));
  Rng rng5(11);
  const Vector g = test::random_simplex(rng5, 5, 0.2), x = test::random_simplex(rng5, 5, 0.2);
  const auto oracle = static_sb_sinkhorn(g, x, *ref5).coupling;
  const auto approx = approximate_imf(g, x, ref5, {.train = {.learning_rate = 1e-2, .n_epochs = 5000}, .n_outer = kApproxImfOuter}, oracle);
  const double tv = total_variation(approx.coupling.matrix(), oracle.matrix());

  const bool ok = grad_err < kGradientTol && !trained.diverged && trained.kernel_error < kKernelErrorTol && tv < kApproxImfTvTol;
  return {ok, fmt("gradient rel. error %.2e; trained kernel error %.2e (d=3); approximate IMF TV %.3e after %zu outer iterations (d=5)",
                  grad_err, trained.kernel_error, tv, approx.trace.size())};
}

// Determinism of the command-line tool.

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

int run_cli(const std::string& args, const fs::path& out) {
  const std::string cmd = "DSB_OUTPUT_DIR='" + out.string() + "' '" DSB_CLI "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  const fs::path configs = DSB_CONFIG_DIR;
  const auto c = [&](const char* f) { return "'" + (configs / f).string() + "'"; };
  const std::string graphs = (configs / "graphs").string();
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"schedule", "schedule " + c("schedule_095.json")},
      {"imf", "imf " + c("imf_d5.json")},
      {"graph-imf", "graph-imf " + c("graph_imf_n2.json")},
      {"sample", "sample " + c("sample_d3.json")},
      {"match", "match " + c("match_our_setting.json") + " --g1 '" + graphs + "/g1.json' --g2 '" + graphs +
                    "/g1_permuted.json' --vocab '" + graphs + "/vocab.json'"},
      {"train-tabular", "train-tabular " + c("train_d3.json")},
      {"train-tabular (approximate IMF)", "train-tabular " + c("approx_imf_d5.json")},
      {"gradient-check", "gradient-check " + c("gradient_check_d3.json")},
  };
  const fs::path root = fs::temp_directory_path() / "dsb_acceptance_determinism";
  std::size_t identical = 0, files = 0;
  std::string failures;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    const auto& [name, args] = commands[i];
    const fs::path a = root / std::to_string(i) / "a", b = root / std::to_string(i) / "b";
    fs::remove_all(a);
    fs::remove_all(b);
    const int ca = run_cli(args + " --seed 7", a), cb = run_cli(args + " --seed 7", b);
    bool same = ca == 0 && cb == 0;
    const auto fa = same ? files_under(a) : std::vector<fs::path>{};
    same = same && !fa.empty() && fa == files_under(b);
    for (const auto& f : fa) same = same && slurp(a / f) == slurp(b / f);
    if (same) {
      ++identical;
      files += fa.size();
    } else {
      failures += " " + name + fmt("(exit %d/%d)", ca, cb);
    }
  }
  fs::remove_all(root);
  return {identical == commands.size(), fmt("%zu/%zu commands byte-identical across two runs (%zu files)", identical,
                                            commands.size(), files) + failures};
}

}  // namespace

int main() {
  bool all = true;
  all &= run_criterion(1, "Schedule fidelity", 1.0, schedule_fidelity);
  all &= run_criterion(2, "Process algebra", 5.0, process_algebra);
  all &= run_criterion(3, "Projection theorems", 10.0, projection_theorems);
  all &= run_criterion(4, "SB convergence vs oracle", 30.0, sb_convergence);
  all &= run_criterion(5, "Graph SB", 30.0, graph_sb);
  all &= run_criterion(6, "QAP recovery protocol", 300.0, qap_protocol);
  all &= run_criterion(7, "GED-NLL affinity", 120.0, ged_affinity);
  all &= run_criterion(8, "Loss/gradient machinery", 300.0, learner);
  all &= run_criterion(9, "Determinism", 0.0, determinism);
  std::printf("%s\n", all ? "all acceptance criteria passed" : "some acceptance criteria FAILED");
  return all ? 0 : 1;
}
