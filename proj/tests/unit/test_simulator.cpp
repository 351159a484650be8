#include <cmath>
#include <vector>

#include "doctest.h"
#include "spde/error.hpp"
#include "spde/simulator.hpp"

using namespace spde;

namespace {

SimConfig small_config(Regime r) {
  SimConfig c = SimConfig::full_scale_defaults(r);
  c.N = 4;
  c.K = 4;
  c.L = 4;
  c.M1 = 3;
  c.M2 = 200;
  c.M3 = 30;
  c.noise.L = 4;
  return c;
}

}  // namespace

TEST_SUITE("simulator") {

TEST_CASE("full-scale defaults") {
  const auto a = SimConfig::full_scale_defaults(Regime::A_OrnsteinUhlenbeck);
  const auto b = SimConfig::full_scale_defaults(Regime::B_DirichletHeat);
  CHECK(a.M3 == 200);
  CHECK(b.M3 == 100);
  CHECK(b.N == 8);
  CHECK(b.K == 16);
  CHECK(b.L == 8);
  CHECK(b.M1 == 1000);
  CHECK(b.M2 == 200);
  CHECK(b.T == 1.0);
}

TEST_CASE("semi-implicit step") {
  CHECK(step_semi_implicit(1.0, 1.0, 0.0, 0.5, 3.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(step_semi_implicit(0.0, 1.0, 1.0, 0.01, 1.0) == doctest::Approx(0.1 / 1.01).epsilon(1e-14));
  double z = 1.0;
  for (int j = 0; j < 200; ++j) z = step_semi_implicit(z, 1.0, 0.0, 1.0 / 200, 0.0);
  CHECK(z == doctest::Approx(std::pow(1.0 + 1.0 / 200, -200)).epsilon(1e-13));
  CHECK(std::abs(z - std::exp(-1.0)) < 1e-2);
}

TEST_CASE("exact OU step") {
  CHECK(step_exact_ou(1.0, 1.0, 0.0, 1.0, 0.7) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(step_exact_ou(0.0, 1.0, 1.0, 1.0, 1.0) == doctest::Approx(std::sqrt(0.4323323584)).epsilon(1e-9));
  CHECK(std::abs(step_exact_ou(0.8, 2.0, 1.0, 1e-14, 1.0) - 0.8) < 1e-6);

  RandomStream rs(3, {0});
  const int M = 100000;
  double s = 0.0;
  double s2 = 0.0;
  for (int i = 0; i < M; ++i) {
    const double v = step_exact_ou(0.0, 1.0, 1.0, 1.0, rs.normal());
    s += v;
    s2 += v * v;
  }
  const double var = (s2 - s * s / M) / (M - 1);
  const double target = (1.0 - std::exp(-2.0)) / 2.0;
  CHECK(std::abs(var - target) < 3.0 * target * std::sqrt(2.0 / (M - 1)));
}

TEST_CASE("time grid") {
  const auto t = uniform_times(1.0, 200);
  REQUIRE(t.size() == 201);
  CHECK(t.front() == 0.0);
  CHECK(t.back() == 1.0);
  CHECK(t[37] == doctest::Approx(37.0 / 200.0).epsilon(1e-15));
}

TEST_CASE("initial slice is the shared projected initial condition") {
  for (Regime r : {Regime::A_OrnsteinUhlenbeck, Regime::B_DirichletHeat}) {
    SimConfig c = small_config(r);
    c.master_seed = 5;
    const SpatialBasis basis(r, c.N);
    const auto grid = make_grid(r, c.M3);
    const auto c0 = initial_condition_coeffs(basis);
    const auto ds = generate_dataset(c);
    CHECK(ds.n_trajectories() == 3);
    CHECK(ds.n_times() == 201);
    CHECK(ds.n_space() == 30);
    for (int m = 1; m < 3; ++m) CHECK((ds.trajectory(m).row(0) - ds.trajectory(0).row(0)).cwiseAbs().maxCoeff() == 0.0);
    for (int i = 0; i < c.M3; ++i) {
      double u = 0.0;
      for (int n = 1; n <= c.N; ++n) u += c0[n - 1] * basis.eval(n, grid.points[i]);
      CHECK(ds.trajectory(0)(0, i) == doctest::Approx(u).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero-noise semi-implicit rollout against exponential decay") {
  SimConfig c = small_config(Regime::B_DirichletHeat);
  ModalSimulator sim(c);
  const auto& c0 = sim.initial_coeffs();
  const auto& lam = sim.lambdas();
  double worst = 0.0;
  double scale = 0.0;
  for (int n = 0; n < c.N; ++n) {
    double z = c0[n];
    for (int j = 1; j <= c.M2; ++j) {
      z = step_semi_implicit(z, lam[n], 0.0, c.dt(), 0.0);
      const double exact = c0[n] * std::exp(-lam[n] * j * c.dt());
      worst = std::max(worst, std::abs(z - exact));
    }
    scale = std::max(scale, std::abs(c0[n]));
  }
  CHECK(worst / scale <= 1e-2);
}

TEST_CASE("trajectories regenerate in isolation and honour the draw order") {
  SimConfig c = small_config(Regime::B_DirichletHeat);
  const ModalSimulator sim(c);
  const auto p1 = sim.simulate(2, true);
  const auto p2 = simulate_modes(c, 2, true);
  CHECK(p1.coeffs == p2.coeffs);
  REQUIRE(p1.draws.rows() == c.M2);
  REQUIRE(p1.draws.cols() == c.N);
  // Replay the recursion from the recorded draws.
  for (int n = 0; n < c.N; ++n) {
    double z = sim.initial_coeffs()[n];
    for (int j = 0; j < c.M2; ++j) {
      z = step_semi_implicit(z, sim.lambdas()[n], sim.forcing()[n], c.dt(), p1.draws(j, n));
      CHECK(z == p1.coeffs(j + 1, n));
    }
  }
  CHECK(sim.simulate(3).coeffs != p1.coeffs);
}

TEST_CASE("ExactOU variance of the first mode") {
  SimConfig c = small_config(Regime::B_DirichletHeat);
  c.scheme = Scheme::ExactOU;
  c.M2 = 10;
  const ModalSimulator sim(c);
  const int M = 100000;
  double s = 0.0;
  double s2 = 0.0;
  for (int m = 0; m < M; ++m) {
    const double v = sim.simulate(static_cast<std::uint64_t>(m)).coeffs(c.M2, 0);
    s += v;
    s2 += v * v;
  }
  const double var = (s2 - s * s / M) / (M - 1);
  const double target = 0.4323323584 * sim.forcing()[0];
  CHECK(std::abs(var - target) < 3.0 * target * std::sqrt(2.0 / (M - 1)));
}

TEST_CASE("config validation") {
  SimConfig c = small_config(Regime::B_DirichletHeat);
  c.M2 = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(parse_scheme("exact_ou") == Scheme::ExactOU);
  CHECK_THROWS_AS((void)parse_scheme("bogus"), Error);
}

}
