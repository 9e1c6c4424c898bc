#pragma once

// Architecture descriptions and their line-based text form.
//
//   input c=3 t=32 h=224 w=224
//   conv3d name=conv1 out=64 k=5x1x1 s=1x1x1
//   maxpool name=pool1 k=1x5x5 s=1x4x4
//   bottleneck name=res2 mid=64 out=256 repeat=3 kt=3 ks=1x1 sdown=1x1x1 down=conv
//   savgpool name=savgpool
//   head kind=transformer layers=1 dim=1024 heads=12 head_dim=64 mlp=2048
//
// Padding is never written; every window uses same_padding(kernel).

#include <string>
#include <string_view>
#include <vector>

#include "ftcn/tensor/tensor.hpp"

namespace ftcn::arch {

class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

enum class LayerKind { conv3d, maxpool3d, bottleneck, spatial_avg_pool };

/// How the first block of a bottleneck group downsamples spatially.
/// `strided_conv` puts sdown on the middle and shortcut convs; `pool` keeps
/// only the temporal part on the convs and follows each with a (1,Sh,Sw) max pool.
enum class Downsample { strided_conv, pool };

struct LayerSpec {
  LayerKind kind = LayerKind::conv3d;
  std::string name;
  std::int64_t out_channels = 0;  // conv3d, bottleneck
  std::int64_t mid_channels = 0;  // bottleneck
  std::int64_t repeat = 1;        // bottleneck
  Dims3 kernel{1, 1, 1};          // conv3d, maxpool3d; middle conv of a bottleneck
  Dims3 stride{1, 1, 1};          // conv3d, maxpool3d; first-block stride of a bottleneck
  Downsample down = Downsample::strided_conv;

  bool operator==(const LayerSpec&) const = default;

  static LayerSpec conv(std::string name, std::int64_t out, Dims3 kernel, Dims3 stride);
  static LayerSpec pool(std::string name, Dims3 kernel, Dims3 stride);
  static LayerSpec group(std::string name, std::int64_t mid, std::int64_t out,
                         std::int64_t repeat, Dims3 kernel, Dims3 stride,
                         Downsample down = Downsample::strided_conv);
  static LayerSpec avg_pool(std::string name);
};

struct InputShape {
  std::int64_t channels = 3, frames = 32, height = 224, width = 224;
  bool operator==(const InputShape&) const = default;
};

enum class HeadKind { transformer, linear };

struct HeadSpec {
  HeadKind kind = HeadKind::transformer;
  std::int64_t layers = 1;
  std::int64_t dim = 1024;
  std::int64_t heads = 12;
  std::int64_t head_dim = 64;
  std::int64_t mlp_dim = 2048;
  bool operator==(const HeadSpec&) const = default;
};

struct ArchSpec {
  InputShape input;
  std::vector<LayerSpec> layers;
  HeadSpec head;
  bool operator==(const ArchSpec&) const = default;

  const LayerSpec* find(std::string_view name) const;
};

/// Checks field ranges and name uniqueness; throws Error naming the layer.
void validate(const ArchSpec& spec);

ArchSpec parse_arch(std::string_view text);
std::string render_arch(const ArchSpec& spec);

ArchSpec load_arch(const std::string& path);
void save_arch(const std::string& path, const ArchSpec& spec);

std::string to_string(LayerKind kind);

}  // namespace ftcn::arch
