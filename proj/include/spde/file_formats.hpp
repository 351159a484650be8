#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "spde/simulator.hpp"
#include "spde/types.hpp"
#include "spde/vlm.hpp"

namespace spde {

/// Dataset container: magic "SPDEDS01", little-endian u32 (M1, M2+1, M3,
/// regime, N, K, L), then f64 times, space points and fields
/// (trajectory-major, then time, then space). The byte length must match the
/// header exactly.
inline constexpr char kDatasetMagic[9] = "SPDEDS01";

/// Writes `path` and the text sidecar `path.meta` (scheme, seed, T, noise).
void write_dataset(const std::filesystem::path& path, const Dataset& ds);

/// Reads the container and, when present, its sidecar. Diagnostics name the
/// failing header field.
[[nodiscard]] Dataset read_dataset(const std::filesystem::path& path);

[[nodiscard]] std::filesystem::path meta_path(const std::filesystem::path& dataset);

/// Checkpoint container: magic "SPDECK01", u32 entry count, then per entry
/// u32 name length, name bytes, u32 rows, u32 cols and rows*cols f64 values
/// in row-major order. Entries are written in name order.
inline constexpr char kCheckpointMagic[9] = "SPDECK01";

using NamedArrays = std::map<std::string, RowMatrix>;

void write_arrays(const std::filesystem::path& path, const NamedArrays& arrays);
[[nodiscard]] NamedArrays read_arrays(const std::filesystem::path& path);

/// Model entries under `prefix`: shape, times, space, one entry per
/// parameter slot, input normalization and the unconditional state.
void put_model(NamedArrays& out, const std::string& prefix, const VariationalModel& model);
[[nodiscard]] VariationalModel get_model(const NamedArrays& in, const std::string& prefix);

/// Full resumable state: current and best models ("model/", "best/"), Adam
/// moments and counters, epoch counters and the training log.
void save_training_state(const std::filesystem::path& path, const TrainingState& state);
[[nodiscard]] TrainingState load_training_state(const std::filesystem::path& path);

/// A single model under the "model/" prefix.
void save_model(const std::filesystem::path& path, const VariationalModel& model);

/// Reads "model/" from a model file, or "best/" from a training-state file.
[[nodiscard]] VariationalModel load_model(const std::filesystem::path& path);

}  // namespace spde
