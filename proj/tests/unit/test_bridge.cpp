#include <doctest.h>

#include <sstream>

#include "dsb/bridge.hpp"
#include "dsb/error.hpp"
#include "support.hpp"

using namespace dsb;

namespace {

struct Fixture {
  Rng rng{19};
  NoiseSchedule schedule = test::random_schedule(rng, 20, 0.85);
  Prior prior{test::random_simplex(rng, 3)};
  ReferenceProcess ref = ReferenceProcess::categorical(schedule, prior);
};

}  // namespace

TEST_CASE("pinned kernel at the horizon hits the endpoint") {
  Fixture f;
  for (std::size_t z = 0; z < 3; ++z) {
    const Matrix k = pinned_kernel(f.ref, 4, 20, z).entries;
    for (Eigen::Index x = 0; x < 3; ++x) CHECK(k(x, static_cast<Eigen::Index>(z)) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("pinned kernel is the h-transform") {
  Fixture f;
  for (std::size_t z = 0; z < 3; ++z) {
    const std::size_t s = 3, t = 11;
    const Matrix k = pinned_kernel(f.ref, s, t, z).entries;
    const Matrix p = f.ref.kernel(s, t);
    const Matrix h = f.ref.kernel(t, 20);
    const Matrix g = f.ref.kernel(s, 20);
    for (Eigen::Index x = 0; x < 3; ++x)
      for (Eigen::Index y = 0; y < 3; ++y) {
        const auto zi = static_cast<Eigen::Index>(z);
        CHECK(k(x, y) == doctest::Approx(p(x, y) * h(y, zi) / g(x, zi)).epsilon(1e-13));
      }
    CHECK((k.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("pinned kernels compose") {
  Fixture f;
  for (std::size_t z = 0; z < 3; ++z) {
    const Matrix a = pinned_kernel(f.ref, 2, 9, z).entries;
    const Matrix b = pinned_kernel(f.ref, 9, 15, z).entries;
    const Matrix c = pinned_kernel(f.ref, 2, 15, z).entries;
    CHECK(test::max_abs(a * b - c) < 1e-12);
  }
}

TEST_CASE("pinned kernels mix back to the reference") {
  Fixture f;
  const std::size_t s = 5, t = 12;
  const Matrix to_end = f.ref.kernel(s, 20);
  Matrix mix = Matrix::Zero(3, 3);
  for (std::size_t z = 0; z < 3; ++z) {
    const Matrix k = pinned_kernel(f.ref, s, t, z).entries;
    for (Eigen::Index x = 0; x < 3; ++x) mix.row(x) += to_end(x, static_cast<Eigen::Index>(z)) * k.row(x);
  }
  CHECK(test::max_abs(mix - f.ref.kernel(s, t)) < 1e-12);
}

TEST_CASE("small noise keeps the bridge at its endpoint") {
  const auto s = build_schedule({.n_steps = 10, .alpha_min = 1.0 - 1e-9});
  const auto ref = ReferenceProcess::categorical(s, Prior::uniform(3));
  CHECK(pinned_kernel(ref, 0, 5, 1).entries(1, 1) > 1.0 - 1e-7);
}

TEST_CASE("pinned rates are finite generators") {
  Fixture f;
  for (std::size_t s = 0; s < 20; ++s)
    for (std::size_t z = 0; z < 3; ++z) {
      const Matrix a = pinned_rate(f.ref, s, z).entries;
      CHECK(a.allFinite());
      CHECK(a.rowwise().sum().cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("pinned first-order step error is second order") {
  const double ratio = test::one_step_error(64, 2) / test::one_step_error(128, 2);
  CHECK(ratio > 3.5);
  CHECK(ratio < 4.5);
}

TEST_CASE("sampled bridges always end at the endpoint") {
  Fixture f;
  const BridgeSampler sampler(f.ref, 2);
  Rng rng(99);
  for (int i = 0; i < 10000; ++i) {
    const auto path = sampler.sample(static_cast<std::size_t>(i % 3), rng);
    REQUIRE(path.end() == 2);
    REQUIRE(path.start() == static_cast<std::size_t>(i % 3));
  }
}

TEST_CASE("noise-free bridge from z to z never jumps") {
  const auto s = build_schedule({.n_steps = 50, .alpha_min = 1.0 - 1e-13});
  const auto ref = ReferenceProcess::categorical(s, Prior::uniform(4));
  Rng rng(1);
  const BridgeSampler sampler(ref, 3);
  for (int i = 0; i < 200; ++i) CHECK(sampler.sample(3, rng).jumps() == 0);
}

TEST_CASE("midpoint histogram matches the analytic bridge marginal") {
  Fixture f;
  const std::size_t x0 = 0, z = 2, mid = 10, n = 100000;
  const BridgeSampler sampler(f.ref, z);
  Rng rng(2024);
  std::vector<double> counts(3, 0.0);
  for (std::size_t i = 0; i < n; ++i) counts[sampler.sample_states(x0, rng)[mid]] += 1.0;
  const Vector p = bridge_marginal(f.ref, x0, z, mid);
  for (std::size_t x = 0; x < 3; ++x) {
    const double px = p(static_cast<Eigen::Index>(x));
    const double sigma = std::sqrt(px * (1.0 - px) / static_cast<double>(n));
    CHECK(std::abs(counts[x] / static_cast<double>(n) - px) < 3.0 * sigma + 1e-12);
  }
}

TEST_CASE("sampling is reproducible per seed") {
  Fixture f;
  const auto a = sample_bridge_path(f.ref, 0, 1, 42);
  const auto b = sample_bridge_path(f.ref, 0, 1, 42);
  CHECK(a.times == b.times);
  CHECK(a.states == b.states);
}

TEST_CASE("grid trajectories collapse to jumps") {
  const std::vector<double> times{0.0, 0.25, 0.5, 0.75, 1.0};
  const auto path = to_jump_path({1, 1, 0, 0, 2}, times);
  CHECK(path.states == std::vector<std::size_t>{1, 0, 2});
  CHECK(path.times == std::vector<double>{0.5, 1.0});

  std::ostringstream out;
  write_path_csv(out, path, StateSpace({"a", "b", "c"}), 1.0);
  CHECK(out.str() == "t,state_label\n0,b\n0.5,a\n1,c\n1,c\n");
}
