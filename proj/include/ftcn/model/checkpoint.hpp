#pragma once

// Checkpoint directory layout:
//   arch.txt      architecture in the arch text format
//   manifest.txt  one "<name> <d0>x<d1>x..." line per tensor
//   <name>.stn    one STN1 file per tensor
// Batch-norm running statistics are stored as "<conv>.bn.running_mean" and
// "<conv>.bn.running_var" next to the parameters.
//
// Bundle ("STNB"): the same entries in one file behind an index:
//   "STNB" | u32 entry count | per entry: u32 name length, name, u64 offset,
//   u64 length | payloads. Offsets count from the start of the payload area.
//   The entry "arch.txt" holds the architecture text; the rest are STN1 blobs.

#include <filesystem>

#include "ftcn/model/model.hpp"

namespace ftcn::model {

void save_checkpoint(const std::filesystem::path& dir, const Model& model);
Model load_checkpoint(const std::filesystem::path& dir);

void save_bundle(const std::filesystem::path& file, const Model& model);
Model load_bundle(const std::filesystem::path& file);

/// Loads either form: a directory or a bundle file.
Model load_model(const std::filesystem::path& path);

}  // namespace ftcn::model
