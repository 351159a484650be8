#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spde/spectral_core.hpp"
#include "spde/types.hpp"

namespace spde {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); zero for a single value
  std::size_t count = 0;
};

[[nodiscard]] MeanStd mean_std(std::span<const double> values);

/// Welford running mean and variance.
class RunningMoments {
 public:
  void add(double x);
  [[nodiscard]] std::size_t count() const { return n_; }
  [[nodiscard]] double mean() const { return mean_; }
  /// Unbiased sample variance; requires two or more values.
  [[nodiscard]] double variance() const;
  /// sqrt(variance / n).
  [[nodiscard]] double std_error() const;

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// ||pred - truth|| / ||truth|| over rows 1..M2 (the t0 row is excluded).
[[nodiscard]] double rel_l2(const Eigen::Ref<const RowMatrix>& pred,
                            const Eigen::Ref<const RowMatrix>& truth);

/// Root mean squared error over rows 1..M2.
[[nodiscard]] double rmse(const Eigen::Ref<const RowMatrix>& pred,
                          const Eigen::Ref<const RowMatrix>& truth);

/// Monte-Carlo E_n = E|c_n|^2 per mode with its standard error.
struct EnergySpectrum {
  std::vector<double> energy;
  std::vector<double> std_error;
};

/// From modal coefficients, one row per sample.
[[nodiscard]] EnergySpectrum energy_spectrum(const RowMatrix& coeffs);

/// From fields sampled on basis.projection_rule().nodes, one row per sample.
[[nodiscard]] EnergySpectrum energy_spectrum(const RowMatrix& fields_on_nodes,
                                             const SpatialBasis& basis);

inline constexpr double kMaxProjectionCondition = 1e8;

/// Least-squares basis coefficients of gridded fields (one row per sample,
/// one column per grid point). Fails when cond(H) exceeds kMaxProjectionCondition.
[[nodiscard]] RowMatrix least_squares_coefficients(const RowMatrix& fields, const SpatialBasis& basis,
                                                   std::span<const double> points);

/// Spatial averaging weights over the observation grid, summing to one:
/// uniform for B, gamma-weighted trapezoid renormalized on the window for A.
[[nodiscard]] std::vector<double> spatial_average_weights(Regime regime, const SpatialGrid& grid);

/// Pointwise mean/variance of a stream of (M2+1) x M3 fields.
class FieldMoments {
 public:
  FieldMoments(int n_times, int n_space);
  void add(const Eigen::Ref<const RowMatrix>& field);
  [[nodiscard]] std::size_t count() const { return n_; }
  [[nodiscard]] const RowMatrix& mean() const { return mean_; }
  /// Unbiased pointwise variance.
  [[nodiscard]] RowMatrix variance() const;

 private:
  std::size_t n_ = 0;
  RowMatrix mean_;
  RowMatrix m2_;
};

/// Pointwise sample variance at each time, averaged in space with `weights`.
[[nodiscard]] std::vector<double> spatial_variance_curve(const FieldMoments& moments,
                                                         std::span<const double> weights);

/// Convenience over a sample set.
[[nodiscard]] std::vector<double> spatial_variance_curve(std::span<const RowMatrix> samples,
                                                         Regime regime, const SpatialGrid& grid);

/// sum_t |curve - reference| / sum_t reference over t >= 1 (t0 carries no variance).
[[nodiscard]] double time_averaged_relative_error(std::span<const double> curve,
                                                  std::span<const double> reference);

/// Evaluation summary of a trained model on a dataset.
struct EvalReport {
  MeanStd rel_l2;
  MeanStd rmse;
  std::vector<double> times;
  std::vector<double> variance_curve;            // unconditional model samples
  std::vector<double> reference_variance_curve;  // dataset trajectories
  std::vector<int> spectrum_time_indices;
  RowMatrix energy_spectrum;            // rows: selected times, cols: modes
  RowMatrix reference_energy_spectrum;  // same layout
  std::vector<double> lambda_learned;
  std::vector<double> lambda_true;
  std::vector<double> q_learned;
  std::vector<double> q_true;
  double gamma_window_mass = 1.0;  // fraction of gamma mass on the window (A); 1 for B
};

}  // namespace spde
