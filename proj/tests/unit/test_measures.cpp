#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dsb/bridge.hpp"
#include "dsb/error.hpp"
#include "dsb/measures.hpp"
#include "support.hpp"

using namespace dsb;

namespace {

std::shared_ptr<const ReferenceProcess> make_ref(Rng& rng, std::size_t d, std::size_t n) {
  return test::categorical_ref(test::random_schedule(rng, n, 0.9), Prior(test::random_simplex(rng, d)));
}

Coupling reference_coupling(const ReferenceProcess& ref, const Vector& init) {
  return Coupling(init.asDiagonal() * ref.to_end(0));
}

Vector delta(std::size_t d, std::size_t i) {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(d));
  v(static_cast<Eigen::Index>(i)) = 1.0;
  return v;
}

}  // namespace

TEST_CASE("coupling validation") {
  Matrix m(2, 2);
  m << 0.5, 0.2, 0.2, 0.2;
  CHECK_THROWS_AS(Coupling{m}, Error);
  m << 0.5, -0.1, 0.4, 0.2;
  CHECK_THROWS_AS(Coupling{m}, Error);
  CHECK_THROWS_AS(Coupling{Matrix::Constant(2, 3, 1.0 / 6.0)}, Error);
  Vector g(2), x(2);
  g << 0.3, 0.7;
  x << 0.6, 0.4;
  const auto ind = Coupling::independent(g, x);
  CHECK((ind.initial_marginal() - g).norm() < 1e-15);
  CHECK((ind.terminal_marginal() - x).norm() < 1e-15);
}

TEST_CASE("reciprocal joints at the boundaries") {
  Rng rng(1);
  const auto ref = make_ref(rng, 3, 10);
  const auto pi = test::random_coupling(rng, 3);
  const ReciprocalMeasure rec(pi, ref);
  CHECK(test::max_abs(reciprocal_joint(rec, 0) - pi.matrix()) < 1e-14);
  const Matrix end = reciprocal_joint(rec, 10);
  CHECK(test::max_abs(end - Matrix(pi.terminal_marginal().asDiagonal())) < 1e-14);
  CHECK(test::max_abs(reciprocal_joint_initial(rec, 10) - pi.matrix()) < 1e-14);
  for (std::size_t k = 0; k <= 10; ++k) {
    const Vector cols = reciprocal_joint(rec, k).colwise().sum().transpose();
    CHECK((cols - pi.terminal_marginal()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("Markov projection preserves time marginals") {
  Rng rng(2);
  const auto ref = make_ref(rng, 4, 30);
  const ReciprocalMeasure rec(test::random_coupling(rng, 4), ref);
  const auto m = markov_projection(rec);
  double worst = 0.0;
  for (std::size_t k = 0; k <= 30; ++k)
    worst = std::max(worst, total_variation(reciprocal_marginal(rec, k), m.marginal(k)));
  CHECK(worst < 1e-10);
  for (const auto& k : m.kernels) CHECK((k.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("Markov projection of a point mass is the pinned bridge") {
  Rng rng(3);
  const auto ref = make_ref(rng, 3, 8);
  const auto pi = Coupling::independent(delta(3, 1), delta(3, 1));
  const auto m = markov_projection(ReciprocalMeasure(pi, ref));
  for (std::size_t k = 0; k <= 8; ++k) CHECK(total_variation(m.marginal(k), bridge_marginal(*ref, 1, 1, k)) < 1e-13);
  CHECK(m.endpoint_coupling()(1, 1) == doctest::Approx(1.0).epsilon(1e-14));

  const auto still = test::categorical_ref(build_schedule({.n_steps = 8, .alpha_min = 1.0 - 1e-13}), Prior::uniform(3));
  const auto frozen = markov_projection(ReciprocalMeasure(pi, still));
  for (std::size_t k = 0; k <= 8; ++k) CHECK(frozen.marginal(k)(1) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("the reference coupling is a fixed point of both projections") {
  Rng rng(4);
  const auto ref = make_ref(rng, 3, 12);
  const Vector init = test::random_simplex(rng, 3);
  const ReciprocalMeasure rec(reference_coupling(*ref, init), ref);
  const auto fwd = markov_projection(rec);
  for (std::size_t k = 0; k < 12; ++k) CHECK(test::max_abs(fwd.kernels[k] - ref->step_kernel(k)) < 1e-12);

  const auto bwd = markov_projection_reverse(rec);
  for (std::size_t k = 0; k < 12; ++k) {
    const Vector pk = fwd.marginal(k);
    const Vector pk1 = fwd.marginal(k + 1);
    const Matrix& step = ref->step_kernel(k);
    for (Eigen::Index y = 0; y < 3; ++y)
      for (Eigen::Index x = 0; x < 3; ++x)
        CHECK(bwd.reversed[k](y, x) == doctest::Approx(pk(x) * step(x, y) / pk1(y)).epsilon(1e-11));
  }
}

TEST_CASE("forward and reverse projections share the endpoint coupling") {
  Rng rng(5);
  const auto ref = make_ref(rng, 3, 20);
  const ReciprocalMeasure rec(test::random_coupling(rng, 3), ref);
  const Coupling a = markov_projection(rec).endpoint_coupling();
  const auto bwd = markov_projection_reverse(rec);
  const Coupling b = bwd.endpoint_coupling();
  CHECK(test::max_abs(a.matrix() - b.matrix()) < 1e-8);
  CHECK(test::max_abs(bwd.to_forward().endpoint_coupling().matrix() - b.matrix()) < 1e-12);
  for (std::size_t k = 0; k <= 20; ++k) CHECK(total_variation(bwd.marginal(k), reciprocal_marginal(rec, k)) < 1e-10);
}

TEST_CASE("reverse projection of a point start stays pinned") {
  Rng rng(6);
  const auto ref = make_ref(rng, 3, 6);
  const auto pi = Coupling::independent(delta(3, 0), test::random_simplex(rng, 3));
  const auto bwd = markov_projection_reverse(ReciprocalMeasure(pi, ref));
  CHECK(bwd.marginal(0)(0) == doctest::Approx(1.0).epsilon(1e-12));
  for (Eigen::Index y = 0; y < 3; ++y) CHECK(bwd.reversed[0](y, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("reciprocal projection of the reference chain") {
  Rng rng(7);
  const auto ref = make_ref(rng, 4, 9);
  const Vector init = test::random_simplex(rng, 4);
  const auto rec = reciprocal_projection(reference_chain(*ref, init), ref);
  CHECK(test::max_abs(rec.coupling().matrix() - reference_coupling(*ref, init).matrix()) < 1e-13);
}

TEST_CASE("reciprocal projection keeps the chain marginals") {
  Rng rng(8);
  const auto ref = make_ref(rng, 3, 5);
  const auto chain = test::random_chain(rng, 3, 5);
  const auto rec = reciprocal_projection(chain, ref);
  CHECK((rec.coupling().initial_marginal() - chain.init).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((rec.coupling().terminal_marginal() - chain.marginal(5)).cwiseAbs().maxCoeff() < 1e-12);

  const auto again = reciprocal_projection(markov_projection(rec), ref);
  CHECK((again.coupling().initial_marginal() - chain.init).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((again.coupling().terminal_marginal() - chain.marginal(5)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("coupling KL") {
  Matrix a(2, 2);
  a << 0.5, 0.0, 0.0, 0.5;
  const Coupling ca(a), cb(Matrix::Constant(2, 2, 0.25));
  CHECK(kl_couplings(ca, cb) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(kl_couplings(cb, cb) == 0.0);
  CHECK(std::isinf(kl_couplings(cb, ca)));
}

TEST_CASE("path KL dominates the endpoint KL") {
  Rng rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    const auto a = test::random_chain(rng, 3, 6);
    const auto b = test::random_chain(rng, 3, 6);
    CHECK(kl_markov_paths(a, a) == doctest::Approx(0.0));
    CHECK(kl_markov_paths(a, b) >= kl_couplings(a.endpoint_coupling(), b.endpoint_coupling()) - 1e-14);
  }
}

TEST_CASE("Pythagorean identity for the Markov projection") {
  Rng rng(10);
  const auto ref = make_ref(rng, 3, 50);
  for (int rep = 0; rep < 5; ++rep) {
    const ReciprocalMeasure rec(test::random_coupling(rng, 3), ref);
    const auto proj = markov_projection(rec);
    auto other = test::random_chain(rng, 3, 50);
    const double lhs = kl_reciprocal_to_markov(rec, other);
    const double rhs = kl_reciprocal_to_markov(rec, proj) + kl_markov_paths(proj, other);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-8 / std::max(1.0, std::abs(lhs))));
  }
}

TEST_CASE("the projection beats random Markov competitors") {
  Rng rng(11);
  const auto ref = make_ref(rng, 3, 10);
  const ReciprocalMeasure rec(test::random_coupling(rng, 3), ref);
  const auto proj = markov_projection(rec);
  const double best = kl_reciprocal_to_markov(rec, proj);
  for (int rep = 0; rep < 50; ++rep) {
    auto competitor = test::random_chain(rng, 3, 10);
    competitor.init = proj.init;
    CHECK(best <= kl_reciprocal_to_markov(rec, competitor));
  }
}

TEST_CASE("conditioning on the start reproduces the bridges") {
  Rng rng(12);
  const auto ref = make_ref(rng, 3, 8);
  const auto pi = test::random_coupling(rng, 3);
  const ReciprocalMeasure rec(pi, ref);
  const auto cond = conditioned_on_start(rec, 1);
  const Matrix end = cond.endpoint_coupling().matrix();
  const Vector row = pi.matrix().row(1).transpose() / pi.initial_marginal()(1);
  CHECK((end.row(1).transpose() - row).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("coupling CSV round trip") {
  Rng rng(13);
  const auto pi = test::random_coupling(rng, 3);
  const StateSpace space({"a", "b", "c"});
  std::stringstream buf;
  write_coupling_csv(buf, pi, space);
  const auto back = read_coupling_csv(buf, space);
  CHECK(test::max_abs(back.matrix() - pi.matrix()) == 0.0);

  std::stringstream wrong("x,y,z\n");
  CHECK_THROWS_AS(read_coupling_csv(wrong, space), Error);
}

TEST_CASE("marginal CSV") {
  std::stringstream ok("label,probability\na,0.25\nb,0.75\n");
  const auto v = read_marginal_csv(ok);
  CHECK(v.labels == std::vector<std::string>{"a", "b"});
  CHECK(v.values(1) == 0.75);
  std::stringstream no_header("a,0.25\nb,0.75\n");
  CHECK_THROWS_AS(read_marginal_csv(no_header), Error);
  std::stringstream junk("label,probability\na,zero\n");
  CHECK_THROWS_AS(read_marginal_csv(junk), Error);

  std::ostringstream out;
  write_marginal_csv(out, v.values, StateSpace({"a", "b"}));
  CHECK(out.str() == "label,probability\na,0.25\nb,0.75\n");
}

TEST_CASE("Markov chain export") {
  Rng rng(14);
  const auto chain = test::random_chain(rng, 2, 3);
  const auto dir = std::filesystem::temp_directory_path() / "dsb_chain_export";
  std::filesystem::remove_all(dir);
  write_markov_chain(dir, chain, StateSpace({"a", "b"}));
  CHECK(std::filesystem::exists(dir / "index.json"));
  std::size_t csvs = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) csvs += e.path().extension() == ".csv";
  CHECK(csvs == 3);
  std::filesystem::remove_all(dir);
}
