#pragma once

// STN1 raw tensor format:
//   "STN1" | u8 axis count | axes as little-endian u32 | payload as little-endian f32
// Row-major payload. Used for clips, checkpoints and feature dumps.

#include <filesystem>
#include <span>
#include <string>

#include "ftcn/tensor/tensor.hpp"

namespace ftcn {

class FormatError : public Error {
 public:
  using Error::Error;
};

std::string encode_stn(const Tensor& t);
Tensor decode_stn(std::span<const char> bytes);

void write_stn(const std::filesystem::path& path, const Tensor& t);
Tensor read_stn(const std::filesystem::path& path);

/// Whole-file helpers shared by the other on-disk formats.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace ftcn
