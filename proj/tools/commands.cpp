#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>

#include "config.hpp"
#include "dsb/bridge.hpp"
#include "dsb/eot_oracle.hpp"
#include "dsb/graph_domain.hpp"
#include "dsb/imf_solver.hpp"
#include "dsb/io.hpp"
#include "dsb/qap_matching.hpp"
#include "dsb/random.hpp"
#include "dsb/tabular_learner.hpp"

namespace dsb::cli {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

using Idx = Eigen::Index;

Idx ix(std::size_t i) { return static_cast<Idx>(i); }

fs::path output_dir(const ConfigNode& node, const std::string& fallback) {
  std::string dir = node.text("output_dir", fallback);
  if (const char* env = std::getenv("DSB_OUTPUT_DIR"); env && *env) dir = env;
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::validation, "cannot write '" + path.string() + "'");
  body(out);
}

void write_json(const fs::path& path, const json& j) {
  write_file(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

std::uint64_t pick_seed(const Context& ctx, const ConfigNode& node) {
  const auto configured = node.seed("seed", 0);
  return ctx.seed ? *ctx.seed : configured;
}

NoiseSchedule parse_schedule(const ConfigNode& root) {
  const auto node = root.child("schedule");
  ScheduleParams p;
  p.n_steps = node.count("n_steps");
  p.alpha_min = node.number("alpha_min");
  p.tau = node.number("tau", p.tau);
  p.s_offset = node.number("s_offset", p.s_offset);
  node.finish();
  try {
    return build_schedule(p);
  } catch (const Error& e) {
    fail(ErrorKind::validation, root.path() + ".schedule: " + e.what());
  }
}

StateSpace parse_space(const ConfigNode& node) {
  if (node.has("labels")) {
    if (node.has("dim")) node.error("dim", "give either labels or dim, not both");
    return StateSpace(node.texts("labels"));
  }
  return StateSpace::numbered(node.count("dim"));
}

Prior parse_prior(const ConfigNode& node, std::size_t d) {
  if (!node.has("prior")) return Prior::uniform(d);
  const auto v = node.numbers("prior");
  if (v.size() != d) node.error("prior", "expected " + std::to_string(d) + " entries");
  try {
    return Prior(Eigen::Map<const Vector>(v.data(), ix(d)));
  } catch (const Error& e) {
    node.error("prior", e.what());
  }
}

Vector random_simplex(Rng& rng, std::size_t d, double floor) {
  Vector v(ix(d));
  for (Idx i = 0; i < v.size(); ++i) v(i) = floor + rng.uniform();
  return v / v.sum();
}

Coupling random_coupling(Rng& rng, std::size_t d) {
  Matrix m(ix(d), ix(d));
  for (Idx i = 0; i < m.rows(); ++i) {
    for (Idx j = 0; j < m.cols(); ++j) m(i, j) = 0.1 + rng.uniform();
  }
  return Coupling(m / m.sum());
}

LabeledVector read_marginal_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::validation, "cannot open marginal file '" + path.string() + "'");
  LabeledVector v;
  try {
    v = read_marginal_csv(in);
  } catch (const Error& e) {
    fail(ErrorKind::validation, path.string() + ": " + e.what());
  }
  if (v.values.minCoeff() < 0.0) fail(ErrorKind::validation, path.string() + ": negative probability");
  const double total = v.values.sum();
  if (std::abs(total - 1.0) > 1e-9) {
    fail(ErrorKind::validation, path.string() + ": probabilities sum to " + io::format_double(total) + ", expected 1");
  }
  return v;
}

Coupling read_coupling_file(const fs::path& path, const StateSpace& space) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::validation, "cannot open coupling file '" + path.string() + "'");
  try {
    return read_coupling_csv(in, space);
  } catch (const Error& e) {
    fail(ErrorKind::validation, path.string() + ": " + e.what());
  }
}

ImfConfig parse_imf(const ConfigNode& root) {
  ImfConfig cfg;
  if (!root.has("imf")) return cfg;
  const auto node = root.child("imf");
  cfg.max_iters = node.count("max_iters", cfg.max_iters);
  cfg.tol_coupling_tv = node.number("tol_coupling_tv", cfg.tol_coupling_tv);
  cfg.alternate_direction = node.flag("alternate_direction", cfg.alternate_direction);
  node.finish();
  return cfg;
}

SinkhornConfig parse_sinkhorn(const ConfigNode& root) {
  SinkhornConfig cfg;
  if (!root.has("sinkhorn")) return cfg;
  const auto node = root.child("sinkhorn");
  cfg.max_iters = node.count("max_iters", cfg.max_iters);
  cfg.tol_marginal = node.number("tol_marginal", cfg.tol_marginal);
  cfg.log_domain = node.flag("log_domain", cfg.log_domain);
  node.finish();
  return cfg;
}

TrainConfig parse_train(const ConfigNode& root, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  if (root.has("train")) {
    const auto node = root.child("train");
    cfg.learning_rate = node.number("learning_rate", cfg.learning_rate);
    cfg.n_epochs = node.count("n_epochs", cfg.n_epochs);
    cfg.batch = node.count("batch", cfg.batch);
    cfg.kernel = kernel_mode_from_string(node.text("kernel", to_string(cfg.kernel)));
    cfg.tol_grad = node.number("tol_grad", cfg.tol_grad);
    cfg.divergence_patience = node.count("divergence_patience", cfg.divergence_patience);
    node.finish();
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    fail(ErrorKind::validation, root.path() + ".train: " + e.what());
  }
  return cfg;
}

Direction parse_direction(const ConfigNode& node) {
  const auto s = node.text("direction", "forward");
  if (s == "forward") return Direction::forward;
  if (s == "backward") return Direction::backward;
  node.error("direction", "expected forward or backward");
}

json vector_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

struct ImfSettings {
  ImfConfig imf;
  SinkhornConfig sinkhorn;
  double threshold = 1e-4;
};

ImfSettings parse_imf_settings(const ConfigNode& root) {
  ImfSettings s;
  s.imf = parse_imf(root);
  s.sinkhorn = parse_sinkhorn(root);
  s.threshold = root.number("tv_threshold", s.threshold);
  return s;
}

// Shared by imf and graph-imf: oracle, IMF from the independent coupling,
// output files and the verdict. Returns the exit code.
int run_imf_experiment(const ImfSettings& settings, const StateSpace& space, std::shared_ptr<const ReferenceProcess> ref,
                       const Vector& gamma, const Vector& xi, const fs::path& out, json& verdict,
                       const std::function<void(const Coupling&)>& extra = {}) {
  const auto& imf_cfg = settings.imf;
  const auto& sk_cfg = settings.sinkhorn;
  const double threshold = settings.threshold;

  const auto oracle = static_sb_sinkhorn(gamma, xi, *ref, sk_cfg);
  const auto result = run_imf(gamma, xi, Coupling::independent(gamma, xi), ref, imf_cfg, oracle.coupling);
  const auto report = imf_diagnostics(result.trace);
  std::cout << report.table;

  write_file(out / "coupling.csv", [&](std::ostream& o) { write_coupling_csv(o, result.coupling, space); });
  write_file(out / "oracle.csv", [&](std::ostream& o) { write_coupling_csv(o, oracle.coupling, space); });
  write_file(out / "trace.csv", [&](std::ostream& o) { write_trace_csv(o, result.trace); });

  const double tv = total_variation(result.coupling.matrix(), oracle.coupling.matrix());
  verdict["tv_to_oracle"] = tv;
  verdict["tv_threshold"] = threshold;
  verdict["within_threshold"] = tv < threshold;
  verdict["monotone"] = report.monotone;
  verdict["converged"] = result.converged;
  verdict["iterations"] = result.trace.records.size();
  verdict["sinkhorn_converged"] = oracle.converged;
  verdict["sinkhorn_iterations"] = oracle.iterations;
  if (extra) extra(result.coupling);
  write_json(out / "verdict.json", verdict);
  return (tv < threshold && oracle.converged) ? ExitCode::ok : ExitCode::non_convergence;
}

Vector parse_graph_marginal(const ConfigNode& node, const std::string& key, std::size_t size, Rng& rng) {
  const auto& raw = node.raw(key);
  if (raw.is_string()) {
    if (raw.get<std::string>() != "random") node.error(key, "expected \"random\" or an array of probabilities");
    return random_simplex(rng, size, 0.2);
  }
  const auto v = node.numbers(key);
  if (v.size() != size) node.error(key, "expected " + std::to_string(size) + " probabilities");
  Vector out = Eigen::Map<const Vector>(v.data(), ix(size));
  if (out.minCoeff() < 0.0 || std::abs(out.sum() - 1.0) > 1e-9) node.error(key, "not a probability vector");
  return out;
}

GraphVocab parse_vocab(const ConfigNode& node, const ConfigFile& file) {
  if (node.has("vocab_file")) {
    if (node.has("vocab")) node.error("vocab", "give either vocab or vocab_file, not both");
    return vocab_from_json(load_json(file.resolve(node.text("vocab_file"))));
  }
  try {
    return vocab_from_json(node.raw("vocab"));
  } catch (const Error& e) {
    fail(ErrorKind::validation, node.path() + ".vocab: " + e.what());
  }
}

}  // namespace

int cmd_schedule(const Context& ctx) {
  const auto file = ConfigFile::load(ctx.config);
  const ConfigNode root(file.json, "config");
  const auto sched = parse_schedule(root);
  pick_seed(ctx, root);
  const auto out = output_dir(root, "out/schedule");
  root.finish();

  write_file(out / "schedule.csv", [&](std::ostream& o) { write_schedule_csv(o, sched); });
  double min_alpha = 1.0;
  for (std::size_t k = 1; k <= sched.steps(); ++k) min_alpha = std::min(min_alpha, sched.alpha(k));
  json summary;
  summary["n_steps"] = sched.steps();
  summary["tau"] = sched.tau();
  summary["alpha_bar_tau"] = sched.alpha_bar(sched.steps());
  summary["min_alpha"] = min_alpha;
  write_json(out / "summary.json", summary);
  std::cout << "alpha_bar(tau) = " << io::format_double(sched.alpha_bar(sched.steps())) << '\n';
  return ExitCode::ok;
}

int cmd_imf(const Context& ctx) {
  const auto file = ConfigFile::load(ctx.config);
  const ConfigNode root(file.json, "config");
  const auto sched = parse_schedule(root);
  const auto g = read_marginal_file(file.resolve(root.text("gamma_file")));
  const auto x = read_marginal_file(file.resolve(root.text("xi_file")));
  if (g.labels != x.labels) fail(ErrorKind::validation, "gamma and xi files list different labels");
  const StateSpace space(g.labels);
  const auto prior = parse_prior(root, space.size());
  pick_seed(ctx, root);
  const auto settings = parse_imf_settings(root);
  const auto out = output_dir(root, "out/imf");
  root.finish();

  auto ref = std::make_shared<const ReferenceProcess>(ReferenceProcess::categorical(sched, prior));
  json verdict;
  verdict["states"] = space.size();
  verdict["n_steps"] = sched.steps();
  return run_imf_experiment(settings, space, ref, g.values, x.values, out, verdict);
}

int cmd_graph_imf(const Context& ctx) {
  const auto file = ConfigFile::load(ctx.config);
  const ConfigNode root(file.json, "config");
  const auto sched = parse_schedule(root);
  const auto vocab = parse_vocab(root, file);
  const auto n = root.count("n");
  const auto cap = root.count("cap", kDefaultGraphSpaceCap);
  const auto seed = pick_seed(ctx, root);
  const auto settings = parse_imf_settings(root);
  const auto out = output_dir(root, "out/graph_imf");

  const auto flat = enumerate_graph_space(vocab, n, cap);
  const auto space = flat.state_space();
  Rng rng(seed);
  const Vector gamma = parse_graph_marginal(root, "gamma", flat.size(), rng);
  const Vector xi = parse_graph_marginal(root, "xi", flat.size(), rng);
  root.finish();
  const GraphReference gref(vocab, sched);
  auto ref = std::make_shared<const ReferenceProcess>(flat.reference(gref));

  write_file(out / "gamma.csv", [&](std::ostream& o) { write_marginal_csv(o, gamma, space); });
  write_file(out / "xi.csv", [&](std::ostream& o) { write_marginal_csv(o, xi, space); });

  auto expected_mismatch = [&](const Matrix& pi) {
    double total = 0.0;
    const auto id = Assignment::identity(n);
    for (std::size_t a = 0; a < flat.size(); ++a) {
      for (std::size_t b = 0; b < flat.size(); ++b) {
        total += pi(ix(a), ix(b)) * static_cast<double>(edit_mismatch(flat.graph(a), flat.graph(b), id));
      }
    }
    return total;
  };

  json verdict;
  verdict["states"] = flat.size();
  verdict["n_steps"] = sched.steps();
  return run_imf_experiment(settings, space, ref, gamma, xi, out, verdict, [&](const Coupling& pi) {
    const double final_mm = expected_mismatch(pi.matrix());
    const double indep_mm = expected_mismatch(Coupling::independent(gamma, xi).matrix());
    verdict["expected_mismatch"] = final_mm;
    verdict["independent_mismatch"] = indep_mm;
    verdict["mismatch_not_worse"] = final_mm <= indep_mm + 1e-12;
  });
}

int cmd_sample(const Context& ctx) {
  const auto file = ConfigFile::load(ctx.config);
  const ConfigNode root(file.json, "config");
  const auto sched = parse_schedule(root);
  const auto space = parse_space(root);
  const auto prior = parse_prior(root, space.size());
  const auto x0 = space.index_of(root.text("x0"));
  const auto z = space.index_of(root.text("z"));
  const auto n_paths = root.count("n_paths");
  const auto n_written = root.count("paths_written", 10);
  const auto seed = pick_seed(ctx, root);
  const auto out = output_dir(root, "out/sample");
  root.finish();
  if (n_paths == 0) fail(ErrorKind::validation, "config.n_paths: must be positive");

  const auto ref = ReferenceProcess::categorical(sched, prior);
  const BridgeSampler sampler(ref, z);
  Rng rng(seed);
  const std::size_t steps = ref.steps();
  const std::size_t d = space.size();
  std::vector<double> counts((steps + 1) * d, 0.0);
  if (n_written > 0) fs::create_directories(out / "paths");
  for (std::size_t i = 0; i < n_paths; ++i) {
    const auto grid = sampler.sample_states(x0, rng);
    for (std::size_t k = 0; k <= steps; ++k) counts[k * d + grid[k]] += 1.0;
    if (i < n_written) {
      char name[32];
      std::snprintf(name, sizeof(name), "path_%05zu.csv", i);
      write_file(out / "paths" / name, [&](std::ostream& o) {
        write_path_csv(o, to_jump_path(grid, ref.times()), space, sched.tau());
      });
    }
  }

  const std::size_t mid = steps / 2;
  double max_mid_z = 0.0;
  write_file(out / "marginals.csv", [&](std::ostream& o) {
    o << "step,t,label,empirical,analytic,std_error,z_score\n";
    const double n = static_cast<double>(n_paths);
    for (std::size_t k = 0; k <= steps; ++k) {
      const Vector analytic = bridge_marginal(ref, x0, z, k);
      for (std::size_t x = 0; x < d; ++x) {
        const double p = analytic(ix(x));
        const double emp = counts[k * d + x] / n;
        const double se = std::sqrt(std::max(p * (1.0 - p), 0.0) / n);
        const double zs = se > 0.0 ? (emp - p) / se : (emp == p ? 0.0 : INFINITY);
        if (k == mid) max_mid_z = std::max(max_mid_z, std::abs(zs));
        o << k << ',' << io::format_double(ref.time(k)) << ',' << space.label(x) << ',' << io::format_double(emp) << ','
          << io::format_double(p) << ',' << io::format_double(se) << ',' << io::format_double(zs) << '\n';
      }
    }
  });

  json verdict;
  verdict["n_paths"] = n_paths;
  verdict["midpoint_step"] = mid;
  verdict["midpoint_max_abs_z"] = max_mid_z;
  verdict["midpoint_within_3_sigma"] = max_mid_z <= 3.0;
  write_json(out / "verdict.json", verdict);
  return ExitCode::ok;
}

int cmd_match(const Context& ctx, const MatchArgs& args) {
  const auto file = ConfigFile::load(ctx.config);
  const ConfigNode root(file.json, "config");
  const auto sched = parse_schedule(root);
  QapSolverConfig cfg;
  if (root.has("solver")) {
    const auto node = root.child("solver");
    cfg.method = qap_method_from_string(node.text("method", to_string(cfg.method)));
    cfg.update = qap_update_from_string(node.text("update", to_string(cfg.update)));
    cfg.tolerance = node.number("tolerance", cfg.tolerance);
    cfg.max_iters = node.count("max_iters", cfg.max_iters);
    cfg.noise_coeff = node.number("noise_coeff", cfg.noise_coeff);
    cfg.n_trials = node.count("n_trials", cfg.n_trials);
    cfg.step_size = node.number("step_size", cfg.step_size);
    cfg.threads = node.count("threads", cfg.threads);
    node.finish();
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    fail(ErrorKind::validation, std::string("config.solver: ") + e.what());
  }
  const auto seed = pick_seed(ctx, root);
  const auto out = output_dir(root, "out/match");
  root.finish();

  const auto vocab = vocab_from_json(load_json(args.vocab));
  const auto g1 = graph_from_json(load_json(args.g1), vocab);
  const auto g2 = graph_from_json(load_json(args.g2), vocab);
  const GraphReference gref(vocab, sched);
  const auto cost = build_qap_cost(gref, g1, g2);
  std::optional<QapResult> oracle;
  if (args.exhaustive) oracle = exhaustive_qap(cost);
  const auto result = solve_qap(cost, cfg, seed);

  const double self_nll = pair_nll(gref, g1, g1, Assignment::identity(g1.size()));
  json j;
  j["mapping"] = result.assignment.mapping;
  j["nll"] = result.nll;
  j["source_self_nll"] = self_nll;
  j["nll_error"] = result.nll - self_nll;
  j["method"] = to_string(cfg.method);
  j["update"] = to_string(cfg.update);
  auto trials = json::array();
  for (const auto& t : result.trials) {
    json tj;
    tj["trial"] = t.trial;
    tj["seed"] = t.seed;
    tj["iterations"] = t.iterations;
    tj["converged"] = t.converged;
    tj["mapping"] = t.assignment.mapping;
    tj["nll"] = t.nll;
    trials.push_back(std::move(tj));
  }
  j["trials"] = std::move(trials);
  if (oracle) {
    json oj;
    oj["mapping"] = oracle->assignment.mapping;
    oj["nll"] = oracle->nll;
    oj["gap"] = result.nll - oracle->nll;
    j["exhaustive"] = std::move(oj);
  }
  write_json(out / "assignment.json", j);
  std::cout << "nll = " << io::format_double(result.nll) << '\n';
  return ExitCode::ok;
}

int cmd_train_tabular(const Context& ctx) {
  const auto file = ConfigFile::load(ctx.config);
  const ConfigNode root(file.json, "config");
  const auto sched = parse_schedule(root);
  const auto space = parse_space(root);
  const auto prior = parse_prior(root, space.size());
  const auto seed = pick_seed(ctx, root);
  const auto mode = root.text("mode", "train");
  const auto tcfg = parse_train(root, seed);
  const auto out = output_dir(root, "out/train_tabular");
  const std::size_t d = space.size();
  auto ref = std::make_shared<const ReferenceProcess>(ReferenceProcess::categorical(sched, prior));
  Rng rng(mix_seed(seed, 1));

  if (mode == "train") {
    const auto direction = parse_direction(root);
    const auto init = root.text("init", "zero");
    const double threshold = root.number("kernel_error_threshold", 1e-2);
    const Coupling coupling = root.has("coupling_file")
                                  ? read_coupling_file(file.resolve(root.text("coupling_file")), space)
                                  : random_coupling(rng, d);
    root.finish();
    const LearningProblem problem(coupling, ref, direction, tcfg.kernel);
    TabularPredictor pred(sched.steps(), d);
    if (init == "exact") {
      pred = problem.exact_posterior();
    } else if (init == "random") {
      Rng init_rng(mix_seed(seed, 3));
      for (std::size_t k = 0; k < pred.steps(); ++k) pred.logits(k) = pred.logits(k).unaryExpr([&](double) { return init_rng.normal(); });
    } else if (init != "zero") {
      fail(ErrorKind::validation, "config.init: expected zero, exact or random");
    }
    const auto result = train(pred, coupling, ref, tcfg, direction);
    const auto& curve = result.curve;
    const bool stopped = tcfg.tol_grad > 0.0 && !curve.empty() && curve.back().grad_norm < tcfg.tol_grad;
    const std::size_t updates = curve.size() - ((stopped || result.diverged) ? 1 : 0);

    write_file(out / "loss_curve.csv", [&](std::ostream& o) { write_loss_curve_csv(o, curve); });
    write_json(out / "predictor.json", predictor_to_json(result.predictor));
    write_file(out / "coupling.csv", [&](std::ostream& o) { write_coupling_csv(o, coupling, space); });
    json verdict;
    verdict["mode"] = mode;
    verdict["direction"] = to_string(direction);
    verdict["kernel"] = to_string(tcfg.kernel);
    verdict["initial_loss"] = curve.empty() ? problem.loss(pred) : curve.front().loss;
    verdict["final_loss"] = result.diverged ? curve.back().loss : problem.loss(result.predictor);
    verdict["loss_floor"] = problem.floor();
    verdict["initial_grad_norm"] = curve.empty() ? 0.0 : curve.front().grad_norm;
    verdict["updates"] = updates;
    verdict["converged_at_start"] = stopped && updates == 0;
    verdict["diverged"] = result.diverged;
    verdict["kernel_error"] = result.kernel_error;
    verdict["kernel_error_threshold"] = threshold;
    verdict["passed"] = !result.diverged && result.kernel_error < threshold;
    write_json(out / "verdict.json", verdict);
    std::cout << "kernel error = " << io::format_double(result.kernel_error) << '\n';
    return result.diverged ? ExitCode::non_convergence : ExitCode::ok;
  }
  if (mode != "approximate_imf") fail(ErrorKind::validation, "config.mode: expected train or approximate_imf");

  ApproxImfConfig acfg;
  acfg.train = tcfg;
  acfg.n_outer = root.count("n_outer", acfg.n_outer);
  acfg.alternate_direction = root.flag("alternate_direction", acfg.alternate_direction);
  acfg.exact_init = root.text("init", "zero") == "exact";
  if (root.has("init") && root.text("init") != "exact" && root.text("init") != "zero") {
    root.error("init", "expected zero or exact");
  }
  const double threshold = root.number("tv_threshold", 5e-2);
  Vector gamma, xi;
  if (root.has("gamma_file") || root.has("xi_file")) {
    const auto g = read_marginal_file(file.resolve(root.text("gamma_file")));
    const auto x = read_marginal_file(file.resolve(root.text("xi_file")));
    if (g.labels != space.labels() || x.labels != space.labels()) {
      fail(ErrorKind::validation, "marginal file labels do not match the state space");
    }
    gamma = g.values;
    xi = x.values;
  } else {
    gamma = random_simplex(rng, d, 0.2);
    xi = random_simplex(rng, d, 0.2);
  }
  root.finish();
  const auto oracle = static_sb_sinkhorn(gamma, xi, *ref);
  const auto result = approximate_imf(gamma, xi, ref, acfg, oracle.coupling);

  write_file(out / "trace.csv", [&](std::ostream& o) {
    o << "iteration,direction,final_loss,loss_floor,kernel_error,tv_to_oracle,initial_marginal_tv,terminal_marginal_tv\n";
    for (const auto& r : result.trace) {
      o << r.iteration << ',' << to_string(r.direction) << ',' << io::format_double(r.final_loss) << ','
        << io::format_double(r.floor) << ',' << io::format_double(r.kernel_error) << ','
        << io::format_double(r.tv_to_oracle) << ',' << io::format_double(r.initial_marginal_tv) << ','
        << io::format_double(r.terminal_marginal_tv) << '\n';
    }
  });
  write_file(out / "coupling.csv", [&](std::ostream& o) { write_coupling_csv(o, result.coupling, space); });
  write_file(out / "oracle.csv", [&](std::ostream& o) { write_coupling_csv(o, oracle.coupling, space); });
  const double tv = result.trace.back().tv_to_oracle;
  json verdict;
  verdict["mode"] = mode;
  verdict["n_outer"] = acfg.n_outer;
  verdict["gamma"] = vector_json(gamma);
  verdict["xi"] = vector_json(xi);
  verdict["tv_to_oracle"] = tv;
  verdict["tv_threshold"] = threshold;
  verdict["kernel_error_last"] = result.trace.back().kernel_error;
  verdict["passed"] = tv < threshold;
  write_json(out / "verdict.json", verdict);
  std::cout << "tv to oracle = " << io::format_double(tv) << '\n';
  return ExitCode::ok;
}

int cmd_gradient_check(const Context& ctx) {
  const auto file = ConfigFile::load(ctx.config);
  const ConfigNode root(file.json, "config");
  const auto sched = parse_schedule(root);
  const auto space = parse_space(root);
  const auto prior = parse_prior(root, space.size());
  const auto seed = pick_seed(ctx, root);
  const auto direction = parse_direction(root);
  const auto kernel = kernel_mode_from_string(root.text("kernel", "exact_step"));
  const auto n_coords = root.count("n_coords", 100);
  const double h = root.number("h", 1e-5);
  const double threshold = root.number("threshold", 1e-4);
  const auto init = root.text("init", "random");
  Rng rng(mix_seed(seed, 1));
  const Coupling coupling = root.has("coupling_file")
                                ? read_coupling_file(file.resolve(root.text("coupling_file")), space)
                                : random_coupling(rng, space.size());
  const auto out = output_dir(root, "out/gradient_check");
  root.finish();

  auto ref = std::make_shared<const ReferenceProcess>(ReferenceProcess::categorical(sched, prior));
  const LearningProblem problem(coupling, ref, direction, kernel);
  TabularPredictor pred(sched.steps(), space.size());
  if (init == "random") {
    Rng init_rng(mix_seed(seed, 3));
    for (std::size_t k = 0; k < pred.steps(); ++k) pred.logits(k) = pred.logits(k).unaryExpr([&](double) { return init_rng.normal(); });
  } else if (init != "zero") {
    fail(ErrorKind::validation, "config.init: expected zero or random");
  }
  const auto check = gradient_check(pred, problem, n_coords, h, mix_seed(seed, 2));
  json verdict;
  verdict["direction"] = to_string(direction);
  verdict["kernel"] = to_string(kernel);
  verdict["coordinates"] = check.coordinates;
  verdict["h"] = h;
  verdict["max_relative_error"] = check.max_relative_error;
  verdict["max_abs_gradient"] = check.max_abs_gradient;
  verdict["threshold"] = threshold;
  verdict["passed"] = check.max_relative_error < threshold;
  write_json(out / "verdict.json", verdict);
  std::cout << "max relative error = " << io::format_double(check.max_relative_error) << '\n';
  return ExitCode::ok;
}

}  // namespace dsb::cli
