#include "ftcn/tensor/stn_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ftcn {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'N', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::span<const char> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  }
  return v;
}

}  // namespace

std::string encode_stn(const Tensor& t) {
  if (t.empty()) throw FormatError("cannot encode an empty tensor");
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(t.rank()));
  for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  out.reserve(out.size() + 4 * static_cast<std::size_t>(t.size()));
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_stn(std::span<const char> bytes) {
  if (bytes.size() < 5 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not an STN1 tensor (bad magic)");
  }
  const std::size_t rank = static_cast<unsigned char>(bytes[4]);
  if (rank < 1 || rank > Tensor::kMaxRank) {
    throw FormatError("STN1 axis count " + std::to_string(rank) + " unsupported");
  }
  std::size_t at = 5;
  if (bytes.size() < at + 4 * rank) throw FormatError("STN1 header truncated");
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i, at += 4) shape[i] = get_u32(bytes, at);
  const auto n = static_cast<std::size_t>(numel(shape));
  if (bytes.size() != at + 4 * n) {
    throw FormatError("STN1 payload holds " + std::to_string(bytes.size() - at) +
                      " bytes, shape " + to_string(shape) + " needs " + std::to_string(4 * n));
  }
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i, at += 4) data[i] = std::bit_cast<float>(get_u32(bytes, at));
  return Tensor(std::move(shape), std::move(data));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

void write_stn(const std::filesystem::path& path, const Tensor& t) {
  write_file(path, encode_stn(t));
}

Tensor read_stn(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  try {
    return decode_stn(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace ftcn
