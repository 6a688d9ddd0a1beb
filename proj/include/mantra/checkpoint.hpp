#pragma once

// Binary checkpoint:
//   "MNTR" | u32 version | u32 length + config JSON text |
//   per parameter: u32 length + name | u32 rank | u64 dims[rank] | f64 values
// All integers and floats little-endian. The parameter list is implied by
// the config, so there is no record count; a short file is corrupt.

#include <cstdint>
#include <span>
#include <string>

#include "mantra/autodiff.hpp"

namespace mantra {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::string& config_json, std::span<Parameter* const> params);

/// Reads only the header and returns the stored config text.
std::string read_checkpoint_config(const std::string& path);

/// Fills `params` in order, checking each record's name and shape. Throws
/// CheckpointError on a version mismatch, a truncated payload, trailing
/// bytes, or a record that does not match.
void load_checkpoint(const std::string& path, std::span<Parameter* const> params);

}  // namespace mantra
