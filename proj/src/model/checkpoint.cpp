#include "ftcn/model/checkpoint.hpp"

#include <cstring>
#include <sstream>

#include "ftcn/tensor/stn_io.hpp"

namespace ftcn::model {

namespace {

namespace fs = std::filesystem;

constexpr char kBundleMagic[4] = {'S', 'T', 'N', 'B'};
constexpr const char* kMeanSuffix = ".running_mean";
constexpr const char* kVarSuffix = ".running_var";

std::map<std::string, Tensor> flatten(const Model& model) {
  std::map<std::string, Tensor> out(model.params().begin(), model.params().end());
  for (const auto& [name, s] : model.norm_stats()) {
    out.emplace(name + kMeanSuffix, s.mean);
    out.emplace(name + kVarSuffix, s.var);
  }
  return out;
}

Model assemble(const std::string& arch_text, std::map<std::string, Tensor> tensors) {
  arch::ArchSpec spec = arch::parse_arch(arch_text);
  ParamMap params;
  StatsMap stats;
  for (auto& [name, t] : tensors) {
    if (name.ends_with(kMeanSuffix)) {
      stats[name.substr(0, name.size() - std::strlen(kMeanSuffix))].mean = std::move(t);
    } else if (name.ends_with(kVarSuffix)) {
      stats[name.substr(0, name.size() - std::strlen(kVarSuffix))].var = std::move(t);
    } else {
      params.emplace(name, std::move(t));
    }
  }
  return Model(std::move(spec), std::move(params), std::move(stats));
}

Shape parse_shape(const std::string& text, const std::string& context) {
  Shape s;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v < 1) throw std::invalid_argument(part);
      s.push_back(v);
    } catch (const std::exception&) {
      throw FormatError(context + ": bad shape '" + text + "'");
    }
  }
  if (s.empty()) throw FormatError(context + ": empty shape");
  return s;
}

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

void put_u(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint64_t get_u(const std::string& in, std::size_t& at, int bytes) {
  if (at + static_cast<std::size_t>(bytes) > in.size()) throw FormatError("bundle index truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  at += static_cast<std::size_t>(bytes);
  return v;
}

}  // namespace

void save_checkpoint(const fs::path& dir, const Model& model) {
  fs::create_directories(dir);
  write_file(dir / "arch.txt", arch::render_arch(model.spec()));
  std::ostringstream manifest;
  for (const auto& [name, t] : flatten(model)) {
    manifest << name << " " << shape_text(t.shape()) << "\n";
    write_stn(dir / (name + ".stn"), t);
  }
  write_file(dir / "manifest.txt", manifest.str());
}

Model load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("checkpoint '" + dir.string() + "' is not a directory");
  const std::string arch_text = read_file(dir / "arch.txt");
  std::istringstream manifest(read_file(dir / "manifest.txt"));
  std::map<std::string, Tensor> tensors;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto space = line.find(' ');
    const std::string context = "manifest.txt:" + std::to_string(line_no);
    if (space == std::string::npos) throw FormatError(context + ": expected '<name> <shape>'");
    const std::string name = line.substr(0, space);
    const Shape shape = parse_shape(line.substr(space + 1), context);
    Tensor t = read_stn(dir / (name + ".stn"));
    if (t.shape() != shape) {
      throw FormatError(context + ": '" + name + "' holds " + to_string(t.shape()) +
                        ", manifest says " + to_string(shape));
    }
    tensors.emplace(name, std::move(t));
  }
  return assemble(arch_text, std::move(tensors));
}

void save_bundle(const fs::path& file, const Model& model) {
  std::vector<std::pair<std::string, std::string>> entries;
  entries.emplace_back("arch.txt", arch::render_arch(model.spec()));
  for (const auto& [name, t] : flatten(model)) entries.emplace_back(name, encode_stn(t));
  std::string out(kBundleMagic, 4);
  put_u(out, entries.size(), 4);
  std::uint64_t offset = 0;
  for (const auto& [name, blob] : entries) {
    put_u(out, name.size(), 4);
    out += name;
    put_u(out, offset, 8);
    put_u(out, blob.size(), 8);
    offset += blob.size();
  }
  for (const auto& [_, blob] : entries) out += blob;
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  write_file(file, out);
}

Model load_bundle(const fs::path& file) {
  const std::string in = read_file(file);
  if (in.size() < 8 || std::memcmp(in.data(), kBundleMagic, 4) != 0) {
    throw FormatError("'" + file.string() + "' is not an STNB bundle");
  }
  std::size_t at = 4;
  const std::uint64_t count = get_u(in, at, 4);
  struct Entry {
    std::string name;
    std::uint64_t offset, length;
  };
  std::vector<Entry> index;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t len = get_u(in, at, 4);
    if (at + len > in.size()) throw FormatError("bundle index truncated");
    Entry e{in.substr(at, len), 0, 0};
    at += len;
    e.offset = get_u(in, at, 8);
    e.length = get_u(in, at, 8);
    index.push_back(std::move(e));
  }
  const std::size_t base = at;
  std::string arch_text;
  bool have_arch = false;
  std::map<std::string, Tensor> tensors;
  for (const auto& e : index) {
    if (base + e.offset + e.length > in.size()) {
      throw FormatError("bundle entry '" + e.name + "' runs past the end of the file");
    }
    const std::span<const char> blob(in.data() + base + e.offset, e.length);
    if (e.name == "arch.txt") {
      arch_text.assign(blob.begin(), blob.end());
      have_arch = true;
    } else {
      tensors.emplace(e.name, decode_stn(blob));
    }
  }
  if (!have_arch) throw FormatError("bundle has no arch.txt entry");
  return assemble(arch_text, std::move(tensors));
}

Model load_model(const fs::path& path) {
  if (fs::is_directory(path)) return load_checkpoint(path);
  return load_bundle(path);
}

}  // namespace ftcn::model
