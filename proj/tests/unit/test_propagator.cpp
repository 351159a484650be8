#include <cmath>
#include <vector>

#include "doctest.h"
#include "spde/error.hpp"
#include "spde/propagator.hpp"
#include "spde/simulator.hpp"

using namespace spde;

namespace {

// Independent oracle: sqrt(q) int_0^t e^{-lam (t-s)} m_k(s) ds by composite Simpson.
double propagator_by_quadrature(double lam, double q, int k, double t, const TimeBasis& tb) {
  const int n = 20000;
  const double h = t / n;
  auto f = [&](double s) { return std::exp(-lam * (t - s)) * tb.eval(k, s); };
  double acc = f(0.0) + f(t);
  for (int i = 1; i < n; ++i) acc += (i % 2 == 1 ? 4.0 : 2.0) * f(i * h);
  return std::sqrt(q) * acc * h / 3.0;
}

}  // namespace

TEST_SUITE("propagator") {

TEST_CASE("softplus map and its inverse") {
  CHECK(positive_map(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(positive_map(800.0) == 800.0);
  for (double v : {1e-6, 0.3, 1.0, 4.0, 64.0, 500.0}) {
    CHECK(positive_map(inverse_positive_map(v)) == doctest::Approx(v).epsilon(1e-12));
  }
  const auto p = DynamicsParams::from_values(std::vector<double>{1.0, 4.0}, std::vector<double>{0.5});
  CHECK(p.lambda(2) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(p.q(1) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("latent layout indices") {
  const LatentLayout big(8, 16, 8);
  CHECK(big.dim() == 1032);
  CHECK(big.index(1) == 0);
  CHECK(latent_index(big, 1, ChaosIndex{1, 1}) == 8);
  CHECK(latent_index(big, 8, ChaosIndex{16, 8}) == 1031);
  CHECK_THROWS_AS((void)big.index(9), Error);
}

TEST_CASE("vector field at the origin and in the zero-order block") {
  const LatentLayout layout(3, 2, 2);
  const TimeBasis tb(1.0, 2);
  const auto p = DynamicsParams::from_values(std::vector<double>{2.0, 3.0, 4.0}, std::vector<double>{0.25, 0.5});
  const Vector d0 = vector_field(p, layout, tb, 0.0, Vector::Zero(static_cast<Eigen::Index>(layout.dim())));
  for (std::size_t i = 0; i < layout.dim(); ++i) {
    double expected = 0.0;
    for (int k = 1; k <= 2; ++k) {
      for (int l = 1; l <= 2; ++l) {
        if (layout.index(l, ChaosIndex{k, l}) == i) expected = tb.eval(k, 0.0) * std::sqrt(p.q(l));
      }
    }
    CHECK(d0(static_cast<Eigen::Index>(i)) == doctest::Approx(expected).epsilon(1e-14));
  }
  Vector z = Vector::Zero(static_cast<Eigen::Index>(layout.dim()));
  z(0) = 1.0;
  CHECK(vector_field(p, layout, tb, 0.3, z)(0) == doctest::Approx(-2.0).epsilon(1e-14));
}

TEST_CASE("scalar RK4 decay") {
  const auto t = uniform_times(1.0, 200);
  auto field = [](double, const Vector& z) { return Vector(-z); };
  const auto out = rk4_integrate(field, Vector(Vector::Ones(1)), t);
  CHECK(std::abs(out.back()(0) - std::exp(-1.0)) < 1e-9);
  const std::vector<double> bad = {0.0, 0.5, 0.5};
  CHECK_THROWS_AS((void)rk4_integrate(field, Vector(Vector::Ones(1)), bad), Error);
}

TEST_CASE("closed-form propagator values") {
  const TimeBasis tb(1.0, 8);
  CHECK(closed_form_propagator(1.0, 1.0, 1, 1.0, tb) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
  CHECK(closed_form_propagator(1.0, 1.0, 1, 1.0, tb) == doctest::Approx(0.6321206).epsilon(1e-7));
  for (int k = 1; k <= 8; ++k) CHECK(closed_form_propagator(3.0, 2.0, k, 0.0, tb) == 0.0);
  CHECK(std::abs(closed_form_propagator(1e6, 1.0, 1, 1.0, tb)) < 2e-6);
  for (double lam : {0.5, 1.0, 4.0, 25.0}) {
    for (int k = 1; k <= 8; ++k) {
      for (double t : {0.13, 0.5, 1.0}) {
        CHECK(std::abs(closed_form_propagator(lam, 0.7, k, t, tb) - propagator_by_quadrature(lam, 0.7, k, t, tb)) < 1e-10);
      }
    }
  }
}

TEST_CASE("RK4 propagators against closed form and block sparsity") {
  const LatentLayout layout(3, 4, 3);
  const TimeBasis tb(1.0, 4);
  const auto p = DynamicsParams::from_values(std::vector<double>{1.0, 4.0, 9.0}, std::vector<double>{1.0, 0.25, 0.1});
  const auto t = uniform_times(1.0, 200);
  const std::vector<double> c0 = {1.0, -0.5, 0.2};
  const RowMatrix rk = rk4_integrate(p, layout, tb, initial_state(layout, c0), t, 1);
  const RowMatrix cf = closed_form_states(p, layout, tb, c0, t);
  CHECK((rk - cf).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(cf(200, static_cast<Eigen::Index>(layout.index(1, ChaosIndex{1, 1}))) ==
        doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
  for (int k = 1; k <= 4; ++k) {
    for (int l = 1; l <= 3; ++l) {
      for (int n = 1; n <= 3; ++n) {
        if (n == l) continue;
        CHECK(rk.col(static_cast<Eigen::Index>(layout.index(n, ChaosIndex{k, l}))).cwiseAbs().maxCoeff() == 0.0);
      }
    }
  }
  const auto zero = rk4_integrate(DynamicsParams::from_values(std::vector<double>{1.0, 4.0, 9.0},
                                                              std::vector<double>{1e-300, 1e-300, 1e-300}),
                                  layout, tb, Vector::Zero(static_cast<Eigen::Index>(layout.dim())), t);
  CHECK(zero.cwiseAbs().maxCoeff() < 1e-140);
}

TEST_CASE("reconstruction structure") {
  const LatentLayout layout(2, 2, 2);
  const TimeBasis tb(1.0, 2);
  const SpatialBasis basis(Regime::B_DirichletHeat, 2);
  const auto grid = make_grid(Regime::B_DirichletHeat, 10);
  const auto p = DynamicsParams::from_values(std::vector<double>{1.0, 4.0}, std::vector<double>{1.0, 0.25});
  const auto t = uniform_times(1.0, 20);
  const std::vector<double> c0 = {1.0, 0.3};
  const RowMatrix states = closed_form_states(p, layout, tb, c0, t);
  const std::vector<double> xi0(4, 0.0);
  const RowMatrix mean_field = reconstruct(states, xi0, layout, basis, grid.points);
  for (int j = 0; j <= 20; ++j) {
    for (int i = 0; i < 10; ++i) {
      const double expected = states(j, 0) * basis.eval(1, grid.points[i]) + states(j, 1) * basis.eval(2, grid.points[i]);
      CHECK(mean_field(j, i) == doctest::Approx(expected).epsilon(1e-13));
    }
  }
  const RowMatrix zeros = RowMatrix::Zero(states.rows(), states.cols());
  const std::vector<double> xi = {0.3, -1.0, 2.0, 0.5};
  CHECK(reconstruct(zeros, xi, layout, basis, grid.points).cwiseAbs().maxCoeff() == 0.0);
  const RowMatrix c = modal_coefficients(states, xi, layout);
  double expect = states(20, 0);
  for (int k = 1; k <= 2; ++k) expect += states(20, static_cast<Eigen::Index>(layout.index(1, ChaosIndex{k, 1}))) * xi[(k - 1) * 2];
  CHECK(c(20, 0) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("modal variance from fresh chaos draws matches the Parseval sum") {
  const int K = 8;
  const LatentLayout layout(2, K, 2);
  const TimeBasis tb(1.0, K);
  const auto p = DynamicsParams::from_values(std::vector<double>{1.0, 4.0}, std::vector<double>{1.0, 0.25});
  const std::vector<double> t = {0.0, 1.0};
  const RowMatrix states = closed_form_states(p, layout, tb, std::vector<double>{0.0, 0.0}, t);
  const int M = 100000;
  for (int n = 1; n <= 2; ++n) {
    double target = 0.0;
    for (int k = 1; k <= K; ++k) {
      const double g = closed_form_propagator(p.lambda(n), p.q(n), k, 1.0, tb);
      target += g * g;
    }
    double s = 0.0;
    double s2 = 0.0;
    const ChaosIndexSet idx(K, 2);
    for (int m = 0; m < M; ++m) {
      const auto xi = sample_chaos(idx, 17, static_cast<std::uint64_t>(m));
      const double c = modal_coefficients(states, xi, layout)(1, n - 1);
      s += c;
      s2 += c * c;
    }
    const double var = (s2 - s * s / M) / (M - 1);
    CHECK(std::abs(var - target) < 3.0 * target * std::sqrt(2.0 / (M - 1)));
  }
}

}
