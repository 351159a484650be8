#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spde/error.hpp"
#include "spde/spectral_core.hpp"
#include "spde/stochastics.hpp"
#include "spde/types.hpp"

namespace spde {

/// Softplus log(1 + e^u), evaluated without overflow.
[[nodiscard]] double positive_map(double u);
/// Inverse of positive_map on (0, inf).
[[nodiscard]] double inverse_positive_map(double v);

/// Unconstrained generative parameters; lambda_n and q_l are their softplus images.
struct DynamicsParams {
  std::vector<double> lambda_raw;  // N entries
  std::vector<double> q_raw;       // L entries

  [[nodiscard]] int n_modes() const { return static_cast<int>(lambda_raw.size()); }
  [[nodiscard]] int n_noise() const { return static_cast<int>(q_raw.size()); }
  [[nodiscard]] double lambda(int n) const { return positive_map(lambda_raw.at(n - 1)); }
  [[nodiscard]] double q(int l) const { return positive_map(q_raw.at(l - 1)); }
  [[nodiscard]] std::vector<double> lambdas() const;
  [[nodiscard]] std::vector<double> qs() const;

  /// Parameters whose positive images are exactly `lambda` and `q`.
  [[nodiscard]] static DynamicsParams from_values(std::span<const double> lambda,
                                                  std::span<const double> q);
};

/// Flat layout of the latent state z of dimension d = N (1 + K L).
/// Block 0 holds the zero-order coefficients z^{(0,n)}; block b = (k-1) L + l
/// holds z^{(e_{k,l}, n)} for n = 1..N.
class LatentLayout {
 public:
  LatentLayout(int N, int K, int L);

  [[nodiscard]] int n_modes() const { return n_; }
  [[nodiscard]] int n_time() const { return k_; }
  [[nodiscard]] int n_noise() const { return l_; }
  [[nodiscard]] std::size_t dim() const {
    return static_cast<std::size_t>(n_) * (1 + static_cast<std::size_t>(k_) * l_);
  }
  [[nodiscard]] ChaosIndexSet chaos() const { return {k_, l_}; }

  /// Zero-order when `alpha` is empty, first-order e_{k,l} otherwise.
  [[nodiscard]] std::size_t index(int n, std::optional<ChaosIndex> alpha = std::nullopt) const;

 private:
  int n_;
  int k_;
  int l_;
};

[[nodiscard]] inline std::size_t latent_index(const LatentLayout& layout, int n,
                                              std::optional<ChaosIndex> alpha) {
  return layout.index(n, alpha);
}

/// dz/dt of the propagator system:
///   dz^{(0,n)}/dt     = -lambda_n z^{(0,n)}
///   dz^{(e_kl,n)}/dt  = -lambda_n z^{(e_kl,n)} + delta_{nl} m_k(t) sqrt(q_l)
[[nodiscard]] Vector vector_field(const DynamicsParams& params, const LatentLayout& layout,
                                  const TimeBasis& tb, double t, const Vector& z);

/// Classical RK4 on a strictly increasing grid, `substeps` equal steps per grid
/// interval, returning the state at every grid time (including times[0]).
/// Nonautonomous terms are evaluated at t, t + h/2 and t + h.
///
/// `State` needs State + State and double * State; this is shared by plain
/// vectors and by the reverse-mode graph types of the variational model.
template <class State, class Field>
std::vector<State> rk4_integrate(const Field& field, State z, std::span<const double> times,
                                 int substeps = 1) {
  require(!times.empty(), "rk4_integrate: empty time grid");
  require(substeps >= 1, "rk4_integrate: substeps must be positive");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) {
      fail(ErrorCategory::InvalidArgument,
           "rk4_integrate: times not strictly increasing at index " + std::to_string(i));
    }
  }
  std::vector<State> out;
  out.reserve(times.size());
  out.push_back(z);
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    const double h = (times[i + 1] - times[i]) / substeps;
    for (int s = 0; s < substeps; ++s) {
      const double t = times[i] + s * h;
      const double t_end = (s + 1 == substeps) ? times[i + 1] : t + h;
      const State k1 = field(t, z);
      const State k2 = field(t + 0.5 * h, State(z + (0.5 * h) * k1));
      const State k3 = field(t + 0.5 * h, State(z + (0.5 * h) * k2));
      const State k4 = field(t_end, State(z + h * k3));
      z = State(z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    }
    out.push_back(z);
  }
  return out;
}

/// RK4 of the propagator system; row j of the result is z(times[j]).
[[nodiscard]] RowMatrix rk4_integrate(const DynamicsParams& params, const LatentLayout& layout,
                                      const TimeBasis& tb, const Vector& z0,
                                      std::span<const double> times, int substeps = 1);

/// sqrt(q) * int_0^t e^{-lambda (t-s)} m_k(s) ds in closed form for the cosine basis.
[[nodiscard]] double closed_form_propagator(double lambda, double q, int k, double t,
                                            const TimeBasis& tb);

/// Exact solution of the propagator system from zero-order data `c0` and zero
/// first-order blocks, one row per time.
[[nodiscard]] RowMatrix closed_form_states(const DynamicsParams& params, const LatentLayout& layout,
                                           const TimeBasis& tb, std::span<const double> c0,
                                           std::span<const double> times);

/// Latent initial state: zero-order block from `zero_order`, first-order blocks zero.
[[nodiscard]] Vector initial_state(const LatentLayout& layout, std::span<const double> zero_order);

/// c_n(t_j) = z^{(0,n)}(t_j) + sum_alpha z^{(alpha,n)}(t_j) xi_alpha, one row per time.
[[nodiscard]] RowMatrix modal_coefficients(const RowMatrix& states, std::span<const double> xi,
                                           const LatentLayout& layout);

/// Truncated chaos reconstruction on the mesh:
///   X(t_j, x_i) = sum_n [z^{(0,n)}(t_j) + sum_alpha z^{(alpha,n)}(t_j) xi_alpha] h_n(x_i).
[[nodiscard]] RowMatrix reconstruct(const RowMatrix& states, std::span<const double> xi,
                                    const LatentLayout& layout, const SpatialBasis& basis,
                                    std::span<const double> points);

}  // namespace spde
