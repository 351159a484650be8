#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "doctest.h"
#include "spde/error.hpp"
#include "spde/spectral_core.hpp"

using namespace spde;

namespace {

constexpr double kPi = std::numbers::pi;

// Composite Simpson on [a, b] with n (even) intervals.
template <class F>
double simpson(F f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

}  // namespace

TEST_SUITE("spectral_core") {

TEST_CASE("basis values at known points") {
  const SpatialBasis a(Regime::A_OrnsteinUhlenbeck, 4);
  const SpatialBasis b(Regime::B_DirichletHeat, 4);
  CHECK(a.eval(1, 2.0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(std::abs(a.eval(2, 1.0)) < 1e-15);
  CHECK(b.eval(1, kPi / 2.0) == doctest::Approx(0.7978845608).epsilon(1e-10));
}

TEST_CASE("eigenvalues follow the regime spectra") {
  const SpatialBasis a(Regime::A_OrnsteinUhlenbeck, 8);
  const SpatialBasis b(Regime::B_DirichletHeat, 8);
  CHECK(a.eigenvalue(3) == 4.0);
  CHECK(b.eigenvalue(3) == 9.0);
  CHECK(b.eigenvalue(1) == 1.0);
  CHECK_THROWS_AS((void)b.eigenvalue(0), Error);
  CHECK_THROWS_AS((void)b.eigenvalue(9), Error);
}

TEST_CASE("Gram matrices are the identity under the module quadrature") {
  for (Regime r : {Regime::A_OrnsteinUhlenbeck, Regime::B_DirichletHeat}) {
    const SpatialBasis basis(r, 8);
    const auto& rule = basis.projection_rule();
    const RowMatrix H = basis.design_matrix(rule.nodes);
    RowMatrix WH = H;
    for (std::size_t i = 0; i < rule.weights.size(); ++i) WH.row(static_cast<Eigen::Index>(i)) *= rule.weights[i];
    const RowMatrix G = H.transpose() * WH;
    CHECK((G - RowMatrix::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("sine Gram matrix agrees with an independent Simpson oracle") {
  const SpatialBasis basis(Regime::B_DirichletHeat, 6);
  for (int m = 1; m <= 6; ++m) {
    for (int n = 1; n <= 6; ++n) {
      const double g = simpson([&](double x) { return basis.eval(m, x) * basis.eval(n, x); }, 0.0, kPi, 10000);
      CHECK(std::abs(g - (m == n ? 1.0 : 0.0)) < 1e-10);
    }
  }
}

TEST_CASE("project recovers unit coefficients and known integrals") {
  const SpatialBasis a(Regime::A_OrnsteinUhlenbeck, 6);
  std::vector<double> f;
  for (double x : a.projection_rule().nodes) f.push_back(a.eval(2, x));
  const auto c = a.project(f);
  for (int n = 1; n <= 6; ++n) CHECK(c[n - 1] == doctest::Approx(n == 2 ? 1.0 : 0.0).epsilon(1e-12));

  const SpatialBasis b(Regime::B_DirichletHeat, 5);
  std::vector<double> s;
  for (double x : b.projection_rule().nodes) s.push_back(std::sin(x));
  const auto cs = b.project(s);
  CHECK(std::abs(cs[0] - std::sqrt(kPi / 2.0)) < 1e-10);
  for (int n = 2; n <= 5; ++n) CHECK(std::abs(cs[n - 1]) < 1e-10);

  std::vector<double> zero(b.projection_rule().nodes.size(), 0.0);
  for (double v : b.project(zero)) CHECK(v == 0.0);
}

TEST_CASE("synthesize and project round trip") {
  for (Regime r : {Regime::A_OrnsteinUhlenbeck, Regime::B_DirichletHeat}) {
    const SpatialBasis basis(r, 8);
    const std::vector<double> coeffs = {0.3, -1.2, 0.5, 2.0, -0.1, 0.7, 0.0, 1.5};
    const auto f = basis.synthesize(coeffs, basis.projection_rule().nodes);
    const auto back = basis.project(f);
    for (int n = 0; n < 8; ++n) CHECK(std::abs(back[n] - coeffs[n]) < 1e-10);
  }
  const SpatialBasis b(Regime::B_DirichletHeat, 3);
  const auto grid = make_grid(Regime::B_DirichletHeat, 20);
  const auto f = b.synthesize(std::vector<double>{1.0, 0.0, 0.0}, grid.points);
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(f[i] == doctest::Approx(std::sqrt(2.0 / kPi) * std::sin(grid.points[i])).epsilon(1e-14));
  }
}

TEST_CASE("initial condition coefficients have the expected symmetry") {
  const SpatialBasis a(Regime::A_OrnsteinUhlenbeck, 8);
  const auto ca = initial_condition_coeffs(a);
  for (int n = 1; n <= 8; n += 2) CHECK(std::abs(ca[n - 1]) < 1e-10);

  const SpatialBasis b(Regime::B_DirichletHeat, 8);
  const auto cb = initial_condition_coeffs(b);
  for (int n = 2; n <= 8; n += 2) CHECK(std::abs(cb[n - 1]) < 1e-10);
  const double oracle = simpson([&](double x) { return initial_condition(Regime::B_DirichletHeat, x) * b.eval(1, x); },
                                0.0, kPi, 10000);
  CHECK(cb[0] > 0.0);
  CHECK(std::abs(cb[0] - oracle) < 1e-9);
}

TEST_CASE("sine modes are eigenfunctions of the Laplacian") {
  const SpatialBasis b(Regime::B_DirichletHeat, 5);
  const double h = 1e-3;
  for (int n = 1; n <= 5; ++n) {
    double worst = 0.0;
    double scale = 0.0;
    for (double x = 0.1; x < kPi - 0.1; x += 0.01) {
      const double lap = (b.eval(n, x + h) - 2.0 * b.eval(n, x) + b.eval(n, x - h)) / (h * h);
      worst = std::max(worst, std::abs(lap + n * n * b.eval(n, x)));
      scale = std::max(scale, std::abs(n * n * b.eval(n, x)));
    }
    CHECK(worst / scale < 1e-3);
  }
}

TEST_CASE("normalized Hermite values match the arbitrary-precision table") {
  std::ifstream in(std::string(SPDE_TEST_DATA_DIR) + "/hermite_reference.csv");
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string a, b, c;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    const int n = std::stoi(a);
    const double x = std::stod(b);
    const double ref = std::stod(c);
    const double got = normalized_hermite(n, x);
    INFO("n=" << n << " x=" << x);
    CHECK(std::abs(got - ref) <= 1e-10 * std::max(std::abs(ref), 1.0));
    ++rows;
  }
  CHECK(rows > 100);
}

TEST_CASE("grids and rules") {
  const auto gb = make_grid(Regime::B_DirichletHeat, 4);
  REQUIRE(gb.size() == 4);
  CHECK(gb.points[0] == doctest::Approx(kPi / 5.0));
  const auto ga = make_grid(Regime::A_OrnsteinUhlenbeck, 7);
  CHECK(ga.points.front() == -3.0);
  CHECK(ga.points.back() == 3.0);
  const auto gh = gauss_hermite_rule(10);
  double total = 0.0;
  double second = 0.0;
  for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
    total += gh.weights[i];
    second += gh.weights[i] * gh.nodes[i] * gh.nodes[i];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(second == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS((void)gauss_hermite_rule(0), Error);
  CHECK(parse_regime("A") == Regime::A_OrnsteinUhlenbeck);
  CHECK_THROWS_AS((void)parse_regime("C"), Error);
}

}
