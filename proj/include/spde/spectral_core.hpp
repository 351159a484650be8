#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "spde/types.hpp"

namespace spde {

/// The two experimental settings.
///  - A: Ornstein-Uhlenbeck generator on L^2(R, gamma), Hermite eigenbasis, lambda_n = n + 1.
///  - B: Dirichlet Laplacian on (0, pi), sine eigenbasis, lambda_n = n^2.
enum class Regime { A_OrnsteinUhlenbeck = 0, B_DirichletHeat = 1 };

[[nodiscard]] std::string_view regime_name(Regime r);
[[nodiscard]] Regime parse_regime(std::string_view s);

/// Standard Gaussian density (2 pi)^{-1/2} exp(-x^2 / 2).
[[nodiscard]] double gaussian_weight(double x);

/// Nodes and weights of a rule integrating against the regime measure
/// (gamma(x) dx for A, dx for B).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Probabilists' Gauss-Hermite rule with weights summing to one, so that
/// sum_i w_i f(x_i) approximates the integral of f against gamma.
/// Exact for polynomials of degree <= 2n - 1.
[[nodiscard]] QuadratureRule gauss_hermite_rule(int n_nodes);

/// Composite trapezoid rule on [0, pi] with `intervals` equal cells. Endpoints
/// carry weight zero (Dirichlet data vanishes there) and are omitted.
[[nodiscard]] QuadratureRule dirichlet_trapezoid_rule(int intervals);

/// Observation mesh. `weights` integrate against the regime measure on the window.
struct SpatialGrid {
  std::vector<double> points;
  std::vector<double> weights;
  double lower = 0.0;
  double upper = 0.0;

  [[nodiscard]] std::size_t size() const { return points.size(); }
};

/// Regime A: `m3` uniform points on [-3, 3] (endpoints included).
/// Regime B: `m3` uniform interior points of (0, pi), x_i = i pi / (m3 + 1).
[[nodiscard]] SpatialGrid make_grid(Regime regime, int m3);
[[nodiscard]] int default_grid_size(Regime regime);

/// He_n(x) / sqrt(n!) by the three-term recurrence of the unnormalized
/// polynomials; the factorial is applied through lgamma.
[[nodiscard]] double normalized_hermite(int n, double x);

class SpatialBasis {
 public:
  static constexpr int kDefaultHermiteNodes = 96;
  static constexpr int kDefaultTrapezoidIntervals = 1024;

  SpatialBasis(Regime regime, int n_modes);

  [[nodiscard]] Regime regime() const { return regime_; }
  [[nodiscard]] int size() const { return n_modes_; }

  /// h_n(x) for 1 <= n <= N.
  [[nodiscard]] double eval(int n, double x) const;
  /// lambda_n for 1 <= n <= N.
  [[nodiscard]] double eigenvalue(int n) const;
  [[nodiscard]] std::vector<double> eigenvalues() const;

  /// All h_1..h_N at x in one recurrence sweep.
  [[nodiscard]] std::vector<double> eval_all(double x) const;

  /// Rows are points, columns are modes: B(i, n-1) = h_n(points[i]).
  [[nodiscard]] RowMatrix design_matrix(std::span<const double> points) const;

  /// Exact projection nodes for this regime.
  [[nodiscard]] const QuadratureRule& projection_rule() const { return rule_; }

  /// c_n = <f, h_n>_H from samples of f on projection_rule().nodes.
  [[nodiscard]] std::vector<double> project(std::span<const double> f_on_nodes) const;
  /// Same against an arbitrary rule of the regime measure.
  [[nodiscard]] std::vector<double> project(std::span<const double> f_on_nodes,
                                            const QuadratureRule& rule) const;

  /// sum_n c_n h_n(x) at each point.
  [[nodiscard]] std::vector<double> synthesize(std::span<const double> coeffs,
                                               std::span<const double> points) const;

 private:
  void check_mode(int n) const;

  Regime regime_;
  int n_modes_;
  QuadratureRule rule_;
};

/// The shared deterministic initial condition u0 of each regime.
///  A: 10 exp(-x^2 / (2 * 0.8^2)).
///  B: x (pi - x) exp(-(x - pi/2)^2 / 0.5^2).
[[nodiscard]] double initial_condition(Regime regime, double x);

/// <u0, h_n>_H for n = 1..N on the basis' exact projection nodes. Any
/// component of u0 outside span{h_1..h_N} (including the constant Hermite
/// mode in regime A) is dropped.
[[nodiscard]] std::vector<double> initial_condition_coeffs(const SpatialBasis& basis);

}  // namespace spde
