#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "spde/config.hpp"
#include "spde/metrics.hpp"
#include "spde/simulator.hpp"
#include "spde/vlm.hpp"

namespace spde {

/// Writes the resolved config echo to `dir/config.txt`.
void write_config_echo(const std::filesystem::path& dir, const RunConfig& cfg);

/// Simulates cfg.sim, writes the dataset and its sidecar, and prints the
/// per-mode empirical variance of the modal coefficients at T.
Dataset cmd_simulate(const RunConfig& cfg, const std::filesystem::path& dataset_path,
                     std::ostream& log);

/// Fails with ErrorCategory::Incompatible unless the dataset header matches
/// the config (regime, truncations, mesh sizes).
void check_compatible(const RunConfig& cfg, const Dataset& ds);

struct TrainOptions {
  /// Continue from `checkpoint_dir/last.ckpt` when it exists.
  bool resume = false;
  /// Stop before this epoch (defaults to cfg.train.epochs).
  std::optional<int> until;
};

/// Trains on `ds` and writes `checkpoint_dir/{last.ckpt,best.ckpt,train_log.csv}`.
TrainingState cmd_train(const RunConfig& cfg, const Dataset& ds,
                        const std::filesystem::path& checkpoint_dir, const TrainOptions& opts,
                        std::ostream& log);

/// Times at which energy spectra are reported: M2/4, M2/2 and M2.
[[nodiscard]] std::vector<int> spectrum_time_indices(int n_times);

/// Conditional metrics on the test split of `ds` and unconditional law
/// diagnostics against the trajectories of `reference`.
[[nodiscard]] EvalReport evaluate(const VariationalModel& model, const Dataset& ds,
                                  const Dataset& reference, const RunConfig& cfg);

/// evaluate() with the dataset as its own reference; writes metrics.csv,
/// variance_curve.csv, energy_spectrum.csv, lambda.csv and q.csv to `out_dir`.
EvalReport cmd_eval(const RunConfig& cfg, const Dataset& ds,
                    const std::filesystem::path& checkpoint, const std::filesystem::path& out_dir,
                    std::ostream& log);

/// Reference statistics of the dataset alone.
struct Diagnostics {
  std::vector<double> times;
  std::vector<double> variance_curve;
  std::vector<int> spectrum_time_indices;
  RowMatrix energy;     // modes x selected times
  RowMatrix energy_se;  // same layout
};

[[nodiscard]] Diagnostics diagnose(const Dataset& ds);

/// Writes variance_curve.csv and energy_spectrum.csv (one row per mode).
Diagnostics cmd_diagnose(const Dataset& ds, const std::filesystem::path& out_dir,
                         std::ostream& log);

/// Train + eval per seed under `checkpoint_dir/seed_<s>` and
/// `out_dir/seed_<s>`, then `out_dir/seeds_summary.csv` with mean and std.
void cmd_multi_seed(const RunConfig& cfg, const Dataset& ds, std::span<const std::uint64_t> seeds,
                    const std::filesystem::path& checkpoint_dir,
                    const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace spde
