#include <doctest.h>

#include <sstream>

#include "dsb/error.hpp"
#include "dsb/state_process.hpp"
#include "support.hpp"

using namespace dsb;

TEST_CASE("schedule endpoint retention matches the published values") {
  const auto a = build_schedule({.n_steps = 100, .alpha_min = 0.999});
  const auto b = build_schedule({.n_steps = 100, .alpha_min = 0.99795});
  CHECK(a.alpha_bar(100) == doctest::Approx(0.95).epsilon(0.005 / 0.95));
  CHECK(b.alpha_bar(100) == doctest::Approx(0.90).epsilon(0.005 / 0.90));
  // frozen regression values
  CHECK(a.alpha_bar(100) == doctest::Approx(0.95083119049930176).epsilon(1e-12));
  CHECK(b.alpha_bar(100) == doctest::Approx(0.90176694568320681).epsilon(1e-12));
}

TEST_CASE("schedule without noise keeps everything") {
  const auto s = build_schedule({.n_steps = 40, .alpha_min = 1.0 - 1e-14});
  for (std::size_t k = 0; k <= 40; ++k) CHECK(s.alpha_bar(k) == doctest::Approx(1.0).epsilon(1e-11));
}

TEST_CASE("schedule is symmetric and non-increasing") {
  for (std::size_t n : {7, 50, 100}) {
    const auto s = build_schedule({.n_steps = n, .alpha_min = 0.99});
    for (std::size_t k = 0; k <= n; ++k) CHECK(s.alpha(k) == doctest::Approx(s.alpha(n - k)).epsilon(1e-15));
    for (std::size_t k = 1; k <= n; ++k) CHECK(s.alpha_bar(k) <= s.alpha_bar(k - 1));
    CHECK(s.alpha_bar(0) == 1.0);
  }
}

TEST_CASE("schedule validation") {
  CHECK_THROWS_AS(build_schedule({.n_steps = 1}), Error);
  CHECK_THROWS_AS(build_schedule({.alpha_min = 1.0}), Error);
  CHECK_THROWS_AS(build_schedule({.alpha_min = 0.0}), Error);
  CHECK_THROWS_AS(build_schedule({.tau = -1.0}), Error);
  CHECK_THROWS_AS(NoiseSchedule::from_alpha_bar(1.0, {1.0, 0.5, 0.6}), Error);
  CHECK_THROWS_AS(NoiseSchedule::from_alpha_bar(1.0, {0.9, 0.5, 0.4}), Error);
  CHECK_THROWS_AS(NoiseSchedule::from_alpha_bar(1.0, {1.0, 0.5, 0.0}), Error);
}

TEST_CASE("grid lookup") {
  const auto s = build_schedule({.n_steps = 10});
  CHECK(s.index_of(0.3) == 3);
  CHECK(s.time(10) == doctest::Approx(1.0));
  CHECK_THROWS_AS(s.index_of(0.35), Error);
  CHECK_THROWS_AS(s.index_of(1.5), Error);
}

TEST_CASE("kernel closed form") {
  const Matrix k = categorical_kernel(0.3, Prior::uniform(2).probabilities());
  CHECK(k(0, 0) == doctest::Approx(0.65).epsilon(1e-15));
  CHECK(k(0, 1) == doctest::Approx(0.35).epsilon(1e-15));
  CHECK(k(1, 0) == doctest::Approx(0.35).epsilon(1e-15));
  CHECK(k(1, 1) == doctest::Approx(0.65).epsilon(1e-15));

  const auto s = build_schedule({.n_steps = 20, .alpha_min = 0.9});
  const auto same = reference_kernel(s, Prior::uniform(4), 7, 7);
  CHECK(test::max_abs(same.entries - Matrix::Identity(4, 4)) < 1e-15);
  CHECK_THROWS_AS(reference_kernel(s, Prior::uniform(4), 8, 7), Error);
}

TEST_CASE("Chapman-Kolmogorov on random grid triples") {
  Rng rng(7);
  const auto s = test::random_schedule(rng, 60, 0.8);
  const Prior prior(test::random_simplex(rng, 4));
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t t[3];
    for (auto& v : t) v = static_cast<std::size_t>(rng.uniform() * 61.0);
    std::sort(t, t + 3);
    const Matrix direct = reference_kernel(s, prior, t[0], t[2]).entries;
    const Matrix composed = reference_kernel(s, prior, t[0], t[1]).entries * reference_kernel(s, prior, t[1], t[2]).entries;
    worst = std::max(worst, test::max_abs(direct - composed));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("kernels are stochastic and leave the prior invariant") {
  Rng rng(11);
  const auto s = test::random_schedule(rng, 30, 0.7);
  const Prior prior(test::random_simplex(rng, 5));
  for (std::size_t a = 0; a <= 30; a += 3) {
    for (std::size_t b = a; b <= 30; b += 4) {
      const Matrix k = reference_kernel(s, prior, a, b).entries;
      CHECK((k.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
      CHECK(k.minCoeff() >= 0.0);
      const Vector moved = k.transpose() * prior.probabilities();
      CHECK((moved - prior.probabilities()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("rates are generators") {
  Rng rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const auto s = test::random_schedule(rng, 25, 0.6);
    const Prior prior(test::random_simplex(rng, 4));
    for (std::size_t k = 0; k <= 25; ++k) {
      const Matrix a = reference_rate(s, prior, k).entries;
      CHECK(a.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
      for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 4; ++j)
          if (i != j) CHECK(a(i, j) >= 0.0);
    }
  }
}

TEST_CASE("constant segment has zero rate") {
  const auto s = NoiseSchedule::from_alpha_bar(1.0, {1.0, 0.5, 0.5, 0.5, 0.25});
  CHECK(test::max_abs(reference_rate(s, Prior::uniform(3), 2).entries) == 0.0);
}

TEST_CASE("first-order step error is second order in the step") {
  const double coarse = test::one_step_error(64);
  const double fine = test::one_step_error(128);
  const double ratio = coarse / fine;
  CHECK(ratio > 3.5);
  CHECK(ratio < 4.5);
}

TEST_CASE("reference process caches agree with direct kernels") {
  Rng rng(5);
  const auto s = test::random_schedule(rng, 12);
  const Prior prior(test::random_simplex(rng, 3));
  const auto ref = ReferenceProcess::categorical(s, prior);
  CHECK(ref.dim() == 3);
  CHECK(ref.steps() == 12);
  for (std::size_t k = 0; k < 12; ++k) {
    CHECK(test::max_abs(ref.step_kernel(k) - reference_kernel(s, prior, k, k + 1).entries) < 1e-15);
    CHECK(test::max_abs(ref.to_end(k) - reference_kernel(s, prior, k, 12).entries) < 1e-13);
    CHECK(test::max_abs(ref.from_start(k) - reference_kernel(s, prior, 0, k).entries) < 1e-13);
  }
  CHECK_THROWS_AS(ref.kernel(5, 4), Error);
}

TEST_CASE("state spaces and priors") {
  const StateSpace space({"a", "b", "c"});
  CHECK(space.index_of("c") == 2);
  CHECK_THROWS_AS(space.index_of("z"), Error);
  CHECK(StateSpace::numbered(3).label(1) == "1");
  CHECK(Prior::uniform(4).is_uniform());
  Vector bad(2);
  bad << 0.0, 1.0;
  CHECK_THROWS_AS(Prior{bad}, Error);
  bad << 0.4, 0.4;
  CHECK_THROWS_AS(Prior{bad}, Error);
}

TEST_CASE("schedule CSV") {
  std::ostringstream out;
  write_schedule_csv(out, build_schedule({.n_steps = 4, .alpha_min = 0.9}));
  const std::string text = out.str();
  CHECK(text.rfind("step,t,alpha,alpha_bar\n0,0,", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 6);
}
