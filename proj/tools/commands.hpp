#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace dsb::cli {

enum ExitCode : int { ok = 0, failure = 1, validation = 2, non_convergence = 3, cap_exceeded = 4 };

struct Context {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
};

struct MatchArgs {
  std::filesystem::path g1;
  std::filesystem::path g2;
  std::filesystem::path vocab;
  bool exhaustive = false;
};

int cmd_schedule(const Context& ctx);
int cmd_imf(const Context& ctx);
int cmd_match(const Context& ctx, const MatchArgs& args);
int cmd_graph_imf(const Context& ctx);
int cmd_sample(const Context& ctx);
int cmd_train_tabular(const Context& ctx);
int cmd_gradient_check(const Context& ctx);

}  // namespace dsb::cli
