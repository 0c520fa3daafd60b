#include <CLI11.hpp>

#include <exception>
#include <iostream>

#include "commands.hpp"
#include "dsb/error.hpp"

namespace {

int exit_code_for(dsb::ErrorKind kind) {
  using dsb::ErrorKind;
  switch (kind) {
    case ErrorKind::cap_exceeded:
      return dsb::cli::ExitCode::cap_exceeded;
    case ErrorKind::non_convergence:
    case ErrorKind::divergence:
      return dsb::cli::ExitCode::non_convergence;
    default:
      return dsb::cli::ExitCode::validation;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete Schrodinger bridge experiments"};
  app.require_subcommand(1);

  dsb::cli::Context ctx;
  std::uint64_t seed = 0;
  dsb::cli::MatchArgs match;

  auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("config", ctx.config, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the config seed");
    return sub;
  };
  auto* schedule = add("schedule", "Tabulate the noise schedule");
  auto* imf = add("imf", "Exact IMF against the Sinkhorn oracle");
  auto* graph_imf = add("graph-imf", "Exact IMF over a flattened tiny graph space");
  auto* sample = add("sample", "Sample reference bridges");
  auto* train = add("train-tabular", "Train the tabular predictor or run approximate IMF");
  auto* grad = add("gradient-check", "Compare analytic and finite-difference gradients");
  auto* m = add("match", "Match two graphs by solving the assignment QAP");
  m->add_option("--g1", match.g1, "Source graph JSON")->required()->check(CLI::ExistingFile);
  m->add_option("--g2", match.g2, "Target graph JSON")->required()->check(CLI::ExistingFile);
  m->add_option("--vocab", match.vocab, "Vocabulary JSON")->required()->check(CLI::ExistingFile);
  m->add_flag("--exhaustive", match.exhaustive, "Cross-check against exhaustive search");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dsb::cli::ExitCode::validation;
  }

  for (auto* sub : app.get_subcommands()) {
    if (sub->count("--seed")) ctx.seed = seed;
  }

  try {
    if (schedule->parsed()) return dsb::cli::cmd_schedule(ctx);
    if (imf->parsed()) return dsb::cli::cmd_imf(ctx);
    if (graph_imf->parsed()) return dsb::cli::cmd_graph_imf(ctx);
    if (sample->parsed()) return dsb::cli::cmd_sample(ctx);
    if (train->parsed()) return dsb::cli::cmd_train_tabular(ctx);
    if (grad->parsed()) return dsb::cli::cmd_gradient_check(ctx);
    if (m->parsed()) return dsb::cli::cmd_match(ctx, match);
  } catch (const dsb::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return dsb::cli::ExitCode::failure;
  }
  return dsb::cli::ExitCode::failure;
}
