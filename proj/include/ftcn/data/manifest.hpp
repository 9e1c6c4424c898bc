#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ftcn/data/synth.hpp"

namespace ftcn::data {

/// One JSONL row: {"path", "label", "method", "video_id", "split", "version"}.
/// `path` is relative to the manifest's directory.
struct ManifestRow {
  std::string path;
  int label = 0;
  std::string method;
  std::string video_id;
  std::string split;
  std::string version{kGeneratorVersion};

  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

struct Manifest {
  std::vector<ManifestRow> rows;
  /// Directory the row paths are relative to.
  std::filesystem::path base;

  std::filesystem::path resolve(const ManifestRow& row) const { return base / row.path; }
};

Manifest read_manifest(const std::filesystem::path& file);
void write_manifest(const std::filesystem::path& file, const std::vector<ManifestRow>& rows);

struct DatasetSpec {
  std::int64_t real = 8;
  /// Fake videos generated per method.
  std::int64_t fake = 8;
  std::vector<Method> methods{Method::flickerA};
  std::int64_t frames = 16, height = 32, width = 32;
  std::uint64_t seed = 0;
  double strength = 0.3;
  /// Requested train / val / test fractions.
  std::array<double, 3> split{0.6, 0.2, 0.2};
};

/// Scene seed of a video: a pure function of the global seed and the id.
std::uint64_t video_seed(std::uint64_t seed, const std::string& video_id);

/// Generates one video exactly as build_manifest does.
Clip generate_video(const DatasetSpec& spec, const std::string& video_id, int label,
                    const std::string& method);

/// Writes clips/<video_id>.stn plus manifest.jsonl under `out_dir`. Splits are
/// assigned per (label, method) group by rounding cumulative fractions, so
/// each group's split sizes are within one video of the request.
Manifest build_manifest(const DatasetSpec& spec, const std::filesystem::path& out_dir);

/// For each method: a manifest whose train/val fakes exclude it and whose
/// test fakes are only it. Reals keep their splits. Written as
/// loo_<method>.jsonl next to the source rows.
std::vector<std::filesystem::path> write_loo_manifests(const Manifest& manifest,
                                                       const std::vector<std::string>& methods,
                                                       const std::filesystem::path& out_dir);

struct Video {
  Tensor pixels;  // [3, T, H, W]
  int label = 0;
  std::string method;
  std::string video_id;
};

/// Loads every row whose split matches (all rows for an empty split).
std::vector<Video> load_videos(const Manifest& manifest, const std::string& split = {});

}  // namespace ftcn::data
