#include "spde/spectral_core.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>

#include "spde/error.hpp"

namespace spde {

namespace {

constexpr double kPi = std::numbers::pi;

// He_0..He_n at x, unnormalized.
void hermite_sweep(int n, double x, std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(n) + 1, 0.0);
  out[0] = 1.0;
  if (n >= 1) out[1] = x;
  for (int k = 1; k < n; ++k) {
    out[k + 1] = x * out[k] - k * out[k - 1];
  }
}

double inv_sqrt_factorial(int n) { return std::exp(-0.5 * std::lgamma(n + 1.0)); }

}  // namespace

std::string_view regime_name(Regime r) {
  return r == Regime::A_OrnsteinUhlenbeck ? "A" : "B";
}

Regime parse_regime(std::string_view s) {
  if (s == "A" || s == "a" || s == "ou" || s == "0") return Regime::A_OrnsteinUhlenbeck;
  if (s == "B" || s == "b" || s == "heat" || s == "1") return Regime::B_DirichletHeat;
  fail(ErrorCategory::InvalidArgument, "unknown regime '" + std::string(s) + "'");
}

double gaussian_weight(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
}

QuadratureRule gauss_hermite_rule(int n_nodes) {
  require(n_nodes >= 1, "gauss_hermite_rule: need at least one node");
  // Golub-Welsch on the Jacobi matrix of the orthonormal probabilists' Hermite
  // family (zero diagonal, off-diagonal sqrt(k)).
  Vector diag = Vector::Zero(n_nodes);
  Vector sub(std::max(n_nodes - 1, 0));
  for (int k = 1; k < n_nodes; ++k) sub(k - 1) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
  eig.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  require(eig.info() == Eigen::Success, "gauss_hermite_rule: eigen solve failed",
          ErrorCategory::Numerical);

  QuadratureRule rule;
  rule.nodes.resize(n_nodes);
  rule.weights.resize(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    double x = eig.eigenvalues()(i);
    // Newton polish on the orthonormal recurrence, p_n' = sqrt(n) p_{n-1}.
    for (int it = 0; it < 3; ++it) {
      double pm1 = 0.0, p = 1.0;
      for (int k = 0; k < n_nodes; ++k) {
        const double next = (x * p - std::sqrt(static_cast<double>(k)) * pm1) /
                            std::sqrt(static_cast<double>(k + 1));
        pm1 = p;
        p = next;
      }
      const double dp = std::sqrt(static_cast<double>(n_nodes)) * pm1;
      if (dp == 0.0) break;
      x -= p / dp;
    }
    // Christoffel weight 1 / sum_{k<n} p_k(x)^2.
    double pm1 = 0.0, p = 1.0, christoffel = 1.0;
    for (int k = 0; k + 1 < n_nodes; ++k) {
      const double next = (x * p - std::sqrt(static_cast<double>(k)) * pm1) /
                          std::sqrt(static_cast<double>(k + 1));
      pm1 = p;
      p = next;
      christoffel += p * p;
    }
    rule.nodes[i] = x;
    rule.weights[i] = 1.0 / christoffel;
  }
  return rule;
}

QuadratureRule dirichlet_trapezoid_rule(int intervals) {
  require(intervals >= 2, "dirichlet_trapezoid_rule: need at least two intervals");
  QuadratureRule rule;
  const double h = kPi / intervals;
  rule.nodes.reserve(intervals - 1);
  for (int j = 1; j < intervals; ++j) {
    rule.nodes.push_back(j * h);
    rule.weights.push_back(h);
  }
  return rule;
}

int default_grid_size(Regime regime) {
  return regime == Regime::A_OrnsteinUhlenbeck ? 200 : 100;
}

SpatialGrid make_grid(Regime regime, int m3) {
  require(m3 >= 2, "make_grid: need at least two spatial points");
  SpatialGrid g;
  g.points.resize(m3);
  g.weights.resize(m3);
  if (regime == Regime::A_OrnsteinUhlenbeck) {
    g.lower = -3.0;
    g.upper = 3.0;
    const double h = (g.upper - g.lower) / (m3 - 1);
    for (int i = 0; i < m3; ++i) {
      g.points[i] = g.lower + i * h;
      const double trap = (i == 0 || i == m3 - 1) ? 0.5 * h : h;
      g.weights[i] = trap * gaussian_weight(g.points[i]);
    }
    g.points[m3 - 1] = g.upper;
  } else {
    g.lower = 0.0;
    g.upper = kPi;
    const double h = kPi / (m3 + 1);
    for (int i = 0; i < m3; ++i) {
      g.points[i] = (i + 1) * h;
      g.weights[i] = h;
    }
  }
  return g;
}

double normalized_hermite(int n, double x) {
  require(n >= 0, "normalized_hermite: negative degree");
  std::vector<double> he;
  hermite_sweep(n, x, he);
  return he[n] * inv_sqrt_factorial(n);
}

SpatialBasis::SpatialBasis(Regime regime, int n_modes) : regime_(regime), n_modes_(n_modes) {
  require(n_modes >= 1, "SpatialBasis: number of modes must be positive");
  if (regime == Regime::A_OrnsteinUhlenbeck) {
    rule_ = gauss_hermite_rule(std::max(kDefaultHermiteNodes, 2 * n_modes + 2));
  } else {
    rule_ = dirichlet_trapezoid_rule(std::max(kDefaultTrapezoidIntervals, 4 * n_modes));
  }
}

void SpatialBasis::check_mode(int n) const {
  if (n < 1 || n > n_modes_) {
    fail(ErrorCategory::InvalidArgument,
         "mode index " + std::to_string(n) + " out of range 1.." + std::to_string(n_modes_));
  }
}

double SpatialBasis::eval(int n, double x) const {
  check_mode(n);
  if (regime_ == Regime::A_OrnsteinUhlenbeck) return normalized_hermite(n, x);
  return std::sqrt(2.0 / kPi) * std::sin(n * x);
}

double SpatialBasis::eigenvalue(int n) const {
  check_mode(n);
  return regime_ == Regime::A_OrnsteinUhlenbeck ? n + 1.0 : static_cast<double>(n) * n;
}

std::vector<double> SpatialBasis::eigenvalues() const {
  std::vector<double> out(n_modes_);
  for (int n = 1; n <= n_modes_; ++n) out[n - 1] = eigenvalue(n);
  return out;
}

std::vector<double> SpatialBasis::eval_all(double x) const {
  std::vector<double> out(n_modes_);
  if (regime_ == Regime::A_OrnsteinUhlenbeck) {
    std::vector<double> he;
    hermite_sweep(n_modes_, x, he);
    for (int n = 1; n <= n_modes_; ++n) out[n - 1] = he[n] * inv_sqrt_factorial(n);
  } else {
    const double scale = std::sqrt(2.0 / kPi);
    for (int n = 1; n <= n_modes_; ++n) out[n - 1] = scale * std::sin(n * x);
  }
  return out;
}

RowMatrix SpatialBasis::design_matrix(std::span<const double> points) const {
  RowMatrix m(static_cast<Eigen::Index>(points.size()), n_modes_);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto row = eval_all(points[i]);
    for (int n = 0; n < n_modes_; ++n) m(static_cast<Eigen::Index>(i), n) = row[n];
  }
  return m;
}

std::vector<double> SpatialBasis::project(std::span<const double> f_on_nodes) const {
  return project(f_on_nodes, rule_);
}

std::vector<double> SpatialBasis::project(std::span<const double> f_on_nodes,
                                          const QuadratureRule& rule) const {
  if (f_on_nodes.size() != rule.nodes.size() || rule.weights.size() != rule.nodes.size()) {
    fail(ErrorCategory::InvalidArgument,
         "project: " + std::to_string(f_on_nodes.size()) + " samples for " +
             std::to_string(rule.nodes.size()) + " nodes / " +
             std::to_string(rule.weights.size()) + " weights");
  }
  std::vector<double> c(n_modes_, 0.0);
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double wf = rule.weights[i] * f_on_nodes[i];
    if (wf == 0.0) continue;
    const auto h = eval_all(rule.nodes[i]);
    for (int n = 0; n < n_modes_; ++n) c[n] += wf * h[n];
  }
  return c;
}

std::vector<double> SpatialBasis::synthesize(std::span<const double> coeffs,
                                             std::span<const double> points) const {
  require(coeffs.size() == static_cast<std::size_t>(n_modes_),
          "synthesize: expected " + std::to_string(n_modes_) + " coefficients, got " +
              std::to_string(coeffs.size()));
  std::vector<double> out(points.size(), 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto h = eval_all(points[i]);
    double s = 0.0;
    for (int n = 0; n < n_modes_; ++n) s += coeffs[n] * h[n];
    out[i] = s;
  }
  return out;
}

double initial_condition(Regime regime, double x) {
  if (regime == Regime::A_OrnsteinUhlenbeck) {
    constexpr double sigma = 0.8;
    return 10.0 * std::exp(-x * x / (2.0 * sigma * sigma));
  }
  constexpr double sigma = 0.5;
  const double d = x - 0.5 * kPi;
  return x * (kPi - x) * std::exp(-d * d / (sigma * sigma));
}

std::vector<double> initial_condition_coeffs(const SpatialBasis& basis) {
  const auto& rule = basis.projection_rule();
  std::vector<double> f(rule.nodes.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = initial_condition(basis.regime(), rule.nodes[i]);
  return basis.project(f);
}

}  // namespace spde
