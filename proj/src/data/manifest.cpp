#include "ftcn/data/manifest.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "ftcn/tensor/stn_io.hpp"
#include "json.hpp"

namespace ftcn::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<const char*, 3> kSplits{"train", "val", "test"};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string pad(std::int64_t i) {
  std::string s = std::to_string(i);
  return std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

/// Split sizes for n items whose cumulative boundaries are rounded fractions.
std::array<std::int64_t, 3> split_sizes(std::int64_t n, const std::array<double, 3>& frac) {
  const double total = frac[0] + frac[1] + frac[2];
  std::array<std::int64_t, 3> out{};
  double acc = 0;
  std::int64_t prev = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    acc += frac[i] / total;
    const std::int64_t edge = i == 2 ? n : std::llround(acc * static_cast<double>(n));
    out[i] = edge - prev;
    prev = edge;
  }
  return out;
}

}  // namespace

Manifest read_manifest(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open manifest '" + file.string() + "'");
  Manifest m;
  m.base = file.parent_path();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = file.string() + ":" + std::to_string(line_no);
    try {
      const json j = json::parse(line);
      ManifestRow r;
      r.path = j.at("path").get<std::string>();
      r.label = j.at("label").get<int>();
      r.method = j.at("method").get<std::string>();
      r.video_id = j.at("video_id").get<std::string>();
      r.split = j.at("split").get<std::string>();
      r.version = j.value("version", std::string{});
      if (r.label != 0 && r.label != 1) throw Error("label must be 0 or 1");
      m.rows.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError(where + ": " + e.what());
    } catch (const FormatError&) {
      throw;
    } catch (const Error& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  return m;
}

void write_manifest(const fs::path& file, const std::vector<ManifestRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    json j;
    j["path"] = r.path;
    j["label"] = r.label;
    j["method"] = r.method;
    j["video_id"] = r.video_id;
    j["split"] = r.split;
    j["version"] = r.version;
    out += j.dump() + "\n";
  }
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  write_file(file, out);
}

std::uint64_t video_seed(std::uint64_t seed, const std::string& video_id) {
  return seed * 0x100000001B3ull ^ fnv1a(video_id);
}

Clip generate_video(const DatasetSpec& spec, const std::string& video_id, int label,
                    const std::string& method) {
  const SceneParams scene =
      random_scene(video_seed(spec.seed, video_id), spec.height, spec.width);
  Clip clip = label == 0 ? gen_real(scene, spec.frames, spec.height, spec.width)
                         : gen_fake(scene, parse_method(method), spec.strength, spec.frames,
                                    spec.height, spec.width);
  clip.video_id = video_id;
  return clip;
}

Manifest build_manifest(const DatasetSpec& spec, const fs::path& out_dir) {
  if (spec.real < 1 || spec.fake < 1) throw Error("real and fake counts must be at least 1");
  if (spec.methods.empty()) throw Error("at least one forgery method is required");
  for (double f : spec.split) {
    if (!(f > 0)) throw Error("split fractions must be positive");
  }
  struct Group {
    std::string method;
    int label;
    std::int64_t count;
  };
  std::vector<Group> groups{{"real", 0, spec.real}};
  for (Method m : spec.methods) groups.push_back({std::string(to_string(m)), 1, spec.fake});

  std::vector<ManifestRow> rows;
  for (const auto& g : groups) {
    const auto sizes = split_sizes(g.count, spec.split);
    for (std::size_t s = 0; s < 3; ++s) {
      if (sizes[s] < 1) {
        throw Error("group '" + g.method + "' of " + std::to_string(g.count) +
                    " videos leaves the " + kSplits[s] + " split empty");
      }
    }
    std::vector<std::int64_t> order(static_cast<std::size_t>(g.count));
    for (std::int64_t i = 0; i < g.count; ++i) order[static_cast<std::size_t>(i)] = i;
    std::mt19937_64 rng(spec.seed ^ fnv1a(g.method));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::string> split_of(static_cast<std::size_t>(g.count));
    std::size_t at = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::int64_t k = 0; k < sizes[s]; ++k) split_of[static_cast<std::size_t>(order[at++])] = kSplits[s];
    }
    for (std::int64_t i = 0; i < g.count; ++i) {
      ManifestRow r;
      r.video_id = g.method + "_" + pad(i);
      r.path = "clips/" + r.video_id + ".stn";
      r.label = g.label;
      r.method = g.method;
      r.split = split_of[static_cast<std::size_t>(i)];
      rows.push_back(std::move(r));
    }
  }

  std::error_code ec;
  fs::create_directories(out_dir / "clips", ec);
  if (ec) throw Error("cannot create output directory '" + out_dir.string() + "': " + ec.message());
  {
    const fs::path probe = out_dir / ".write_probe";
    std::ofstream test(probe);
    if (!test) throw Error("output directory '" + out_dir.string() + "' is not writable");
    test.close();
    fs::remove(probe);
  }
  std::vector<Clip> clips(rows.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < rows.size(); ++i) {
    clips[i] = generate_video(spec, rows[i].video_id, rows[i].label, rows[i].method);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) write_stn(out_dir / rows[i].path, clips[i].pixels);
  write_manifest(out_dir / "manifest.jsonl", rows);
  return Manifest{std::move(rows), out_dir};
}

std::vector<fs::path> write_loo_manifests(const Manifest& manifest,
                                          const std::vector<std::string>& methods,
                                          const fs::path& out_dir) {
  std::set<std::string> present;
  for (const auto& r : manifest.rows) {
    if (r.label == 1) present.insert(r.method);
  }
  std::vector<fs::path> out;
  for (const auto& held : methods) {
    if (!present.contains(held)) {
      throw Error("manifest has no fake videos of method '" + held + "'");
    }
    std::vector<ManifestRow> rows;
    for (auto r : manifest.rows) {
      if (r.label == 1) {
        const bool is_held = r.method == held;
        if (is_held != (r.split == "test")) continue;
      }
      r.path = fs::relative(manifest.resolve(r), out_dir).generic_string();
      rows.push_back(std::move(r));
    }
    const fs::path file = out_dir / ("loo_" + held + ".jsonl");
    write_manifest(file, rows);
    out.push_back(file);
  }
  return out;
}

std::vector<Video> load_videos(const Manifest& manifest, const std::string& split) {
  std::vector<Video> out;
  for (const auto& r : manifest.rows) {
    if (!split.empty() && r.split != split) continue;
    Tensor px = read_stn(manifest.resolve(r));
    if (px.rank() != 4 || px.dim(0) != 3) {
      throw FormatError("'" + r.path + "' is not a video [3, T, H, W]: " + ftcn::to_string(px.shape()));
    }
    out.push_back({std::move(px), r.label, r.method, r.video_id});
  }
  return out;
}

}  // namespace ftcn::data
