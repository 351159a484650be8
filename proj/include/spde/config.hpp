#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "spde/simulator.hpp"
#include "spde/vlm.hpp"

namespace spde {

/// Fully resolved run configuration: simulation, training, evaluation and paths.
struct RunConfig {
  std::string profile = "full";
  SimConfig sim;
  TrainConfig train;
  /// Unconditional samples drawn for law diagnostics.
  int eval_samples = 10000;
  /// Training progress is printed every `log_every` epochs (0 disables).
  int log_every = 10;
  std::string dataset_path = "dataset.bin";
  std::string checkpoint_path = "checkpoint";
  std::string out_dir = "out";

  void validate() const;
};

/// Built-in profiles: "full" (regime B at full scale) and "desk" (N=4, K=8,
/// L=4, M1=256, M2=50, M3=64, 300 epochs).
[[nodiscard]] RunConfig profile_config(std::string_view name);

/// Parses `key = value` lines; '#' starts a comment. A `profile` key, when
/// present, must come first and selects the base profile (default "full").
/// Unknown keys, duplicate keys and malformed values are Config errors that
/// name the offending line.
[[nodiscard]] RunConfig parse_config(std::string_view text);

[[nodiscard]] RunConfig load_config(const std::filesystem::path& path);

/// Every key with its resolved value, in canonical order; reals use %.17g so
/// parse_config(echo_config(c)) reproduces c exactly.
[[nodiscard]] std::string echo_config(const RunConfig& cfg);

}  // namespace spde
