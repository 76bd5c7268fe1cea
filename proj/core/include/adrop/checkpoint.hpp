#pragma once

#include <string>

#include "adrop/params.hpp"

namespace adrop {

// Binary model snapshot. Layout: magic "ADRP", u32 format version, u32 group
// count, then per group: u32 name length, name bytes, u32 rank, rank u64
// dimensions, and the values as little-endian IEEE-754 doubles. Round-trips
// bit-exactly.
void save_checkpoint(const std::string& path, const ModelParams& params);

// Loads groups with their shapes and values. Unit-axis / layer metadata is
// not part of the format; callers re-bind it from the model architecture.
ModelParams load_checkpoint(const std::string& path);

}  // namespace adrop
