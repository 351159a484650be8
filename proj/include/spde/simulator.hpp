#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "spde/spectral_core.hpp"
#include "spde/stochastics.hpp"
#include "spde/types.hpp"

namespace spde {

enum class Scheme { SemiImplicitEM, ExactOU };

[[nodiscard]] std::string_view scheme_name(Scheme s);
[[nodiscard]] Scheme parse_scheme(std::string_view s);

struct SimConfig {
  Regime regime = Regime::B_DirichletHeat;
  int N = 8;
  int K = 16;
  int L = 8;
  double T = 1.0;
  int M1 = 1000;
  int M2 = 200;
  int M3 = 100;
  Scheme scheme = Scheme::SemiImplicitEM;
  std::uint64_t master_seed = 20240917;
  NoiseSpectrum noise{};
  int workers = 1;

  /// Full-scale defaults for a regime (M3 = 200 for A, 100 for B).
  [[nodiscard]] static SimConfig full_scale_defaults(Regime regime);

  [[nodiscard]] double dt() const { return T / M2; }
  void validate() const;
};

/// Backward-Euler drift, explicit noise: (z + sqrt(q dt) g) / (1 + lambda dt).
[[nodiscard]] double step_semi_implicit(double z, double lambda, double q, double dt, double g);

/// Exact Gaussian transition of dz = -lambda z dt + sqrt(q) dw over dt.
[[nodiscard]] double step_exact_ou(double z, double lambda, double q, double dt, double g);

/// Uniform grid t_j = j T / M2, j = 0..M2, with the last point pinned to T.
[[nodiscard]] std::vector<double> uniform_times(double T, int M2);

/// Modal coefficients of one realization.
struct ModalPath {
  RowMatrix coeffs;  // (M2+1) x N, c_n(t_j)
  RowMatrix draws;   // M2 x N standard normal draws used per step (empty unless requested)
};

/// Precomputed per-mode constants (eigenvalues, forcing amplitudes, u0
/// coefficients) for repeated trajectory simulation.
class ModalSimulator {
 public:
  explicit ModalSimulator(const SimConfig& cfg);

  /// Integrates all N modes of trajectory `trajectory` with the configured scheme.
  /// Draws are keyed by (master_seed, trajectory) and consumed step-major,
  /// mode-minor, so any trajectory can be regenerated in isolation.
  [[nodiscard]] ModalPath simulate(std::uint64_t trajectory, bool keep_draws = false) const;

  [[nodiscard]] const SimConfig& config() const { return cfg_; }
  [[nodiscard]] const std::vector<double>& lambdas() const { return lambda_; }
  /// q_n for n <= L, zero above.
  [[nodiscard]] const std::vector<double>& forcing() const { return q_; }
  [[nodiscard]] const std::vector<double>& initial_coeffs() const { return c0_; }

 private:
  SimConfig cfg_;
  std::vector<double> lambda_;
  std::vector<double> q_;
  std::vector<double> c0_;
};

/// One-off convenience over ModalSimulator.
[[nodiscard]] ModalPath simulate_modes(const SimConfig& cfg, std::uint64_t trajectory,
                                       bool keep_draws = false);

/// Observed trajectories on the (M2+1) x M3 mesh.
struct Dataset {
  Regime regime = Regime::B_DirichletHeat;
  int N = 0;
  int K = 0;
  int L = 0;
  std::vector<double> times;
  std::vector<double> space;
  std::vector<double> fields;  // [M1][M2+1][M3]

  // Generation metadata; carried in the sidecar file, not the binary container.
  Scheme scheme = Scheme::SemiImplicitEM;
  std::uint64_t seed = 0;
  NoiseSpectrum noise{};

  [[nodiscard]] int n_trajectories() const;
  [[nodiscard]] int n_times() const { return static_cast<int>(times.size()); }
  [[nodiscard]] int n_space() const { return static_cast<int>(space.size()); }

  /// Read-only view of trajectory m1 as an (M2+1) x M3 matrix.
  [[nodiscard]] Eigen::Map<const RowMatrix> trajectory(int m1) const;
  [[nodiscard]] Eigen::Map<RowMatrix> trajectory(int m1);
};

/// Simulates cfg.M1 trajectories and synthesizes them on the observation grid.
/// The t = 0 slice is the N-mode projection of u0 and is shared by every trajectory.
[[nodiscard]] Dataset generate_dataset(const SimConfig& cfg);

}  // namespace spde
