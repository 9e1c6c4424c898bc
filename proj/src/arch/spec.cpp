#include "ftcn/arch/spec.hpp"

#include <charconv>
#include <map>
#include <set>
#include <sstream>

#include "ftcn/tensor/stn_io.hpp"

namespace ftcn::arch {

LayerSpec LayerSpec::conv(std::string name, std::int64_t out, Dims3 kernel, Dims3 stride) {
  LayerSpec l;
  l.kind = LayerKind::conv3d;
  l.name = std::move(name);
  l.out_channels = out;
  l.kernel = kernel;
  l.stride = stride;
  return l;
}

LayerSpec LayerSpec::pool(std::string name, Dims3 kernel, Dims3 stride) {
  LayerSpec l;
  l.kind = LayerKind::maxpool3d;
  l.name = std::move(name);
  l.kernel = kernel;
  l.stride = stride;
  return l;
}

LayerSpec LayerSpec::group(std::string name, std::int64_t mid, std::int64_t out,
                           std::int64_t repeat, Dims3 kernel, Dims3 stride, Downsample down) {
  LayerSpec l;
  l.kind = LayerKind::bottleneck;
  l.name = std::move(name);
  l.mid_channels = mid;
  l.out_channels = out;
  l.repeat = repeat;
  l.kernel = kernel;
  l.stride = stride;
  l.down = down;
  return l;
}

LayerSpec LayerSpec::avg_pool(std::string name) {
  LayerSpec l;
  l.kind = LayerKind::spatial_avg_pool;
  l.name = std::move(name);
  return l;
}

const LayerSpec* ArchSpec::find(std::string_view name) const {
  for (const auto& l : layers) {
    if (l.name == name) return &l;
  }
  return nullptr;
}

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv3d: return "conv3d";
    case LayerKind::maxpool3d: return "maxpool";
    case LayerKind::bottleneck: return "bottleneck";
    case LayerKind::spatial_avg_pool: return "savgpool";
  }
  return "?";
}

namespace {

bool positive(Dims3 d) { return d.t >= 1 && d.h >= 1 && d.w >= 1; }

std::string auto_prefix(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv3d: return "conv";
    case LayerKind::maxpool3d: return "pool";
    case LayerKind::bottleneck: return "res";
    case LayerKind::spatial_avg_pool: return "savgpool";
  }
  return "layer";
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

class LineFields {
 public:
  LineFields(int line, std::string_view keyword, const std::vector<std::string_view>& tokens,
             std::set<std::string> allowed)
      : line_(line), keyword_(keyword) {
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      const auto eq = tokens[i].find('=');
      if (eq == std::string_view::npos || eq == 0 || eq + 1 == tokens[i].size()) {
        throw ParseError(line, "expected key=value, got '" + std::string(tokens[i]) + "'");
      }
      std::string key(tokens[i].substr(0, eq));
      if (!allowed.contains(key)) {
        throw ParseError(line, "unknown key '" + key + "' for " + std::string(keyword));
      }
      if (!fields_.emplace(key, std::string(tokens[i].substr(eq + 1))).second) {
        throw ParseError(line, "key '" + key + "' given twice");
      }
    }
  }

  bool has(const std::string& key) const { return fields_.contains(key); }

  std::string text(const std::string& key, std::string fallback = {}) const {
    const auto it = fields_.find(key);
    return it == fields_.end() ? fallback : it->second;
  }

  std::int64_t count(const std::string& key) const {
    const auto it = fields_.find(key);
    if (it == fields_.end()) {
      throw ParseError(line_, std::string(keyword_) + " needs " + key + "=<n>");
    }
    return parse_count(key, it->second);
  }

  std::int64_t count(const std::string& key, std::int64_t fallback) const {
    return has(key) ? count(key) : fallback;
  }

  /// `n` integers joined by 'x'.
  std::vector<int> tuple(const std::string& key, std::size_t n) const {
    const auto it = fields_.find(key);
    if (it == fields_.end()) {
      throw ParseError(line_, std::string(keyword_) + " needs " + key + "=<tuple>");
    }
    std::vector<int> out;
    std::string_view rest = it->second;
    for (;;) {
      const auto x = rest.find('x');
      out.push_back(static_cast<int>(parse_count(key, rest.substr(0, x))));
      if (x == std::string_view::npos) break;
      rest = rest.substr(x + 1);
    }
    if (out.size() != n) {
      throw ParseError(line_, "malformed tuple " + key + "=" + it->second + " (expected " +
                                  std::to_string(n) + " values)");
    }
    return out;
  }

  Dims3 dims(const std::string& key) const {
    const auto v = tuple(key, 3);
    return {v[0], v[1], v[2]};
  }

  Dims3 dims(const std::string& key, Dims3 fallback) const {
    return has(key) ? dims(key) : fallback;
  }

 private:
  std::int64_t parse_count(const std::string& key, std::string_view s) const {
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw ParseError(line_, "malformed number '" + std::string(s) + "' for " + key);
    }
    if (v < 1 || v > (1 << 24)) {
      throw ParseError(line_, key + " must be in [1, 2^24], got " + std::string(s));
    }
    return v;
  }

  int line_;
  std::string_view keyword_;
  std::map<std::string, std::string> fields_;
};

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '.' || c == '-';
    if (!ok) return false;
  }
  return true;
}

}  // namespace

void validate(const ArchSpec& spec) {
  const InputShape& in = spec.input;
  if (in.channels < 1 || in.frames < 1 || in.height < 1 || in.width < 1) {
    throw Error("input extents must be positive");
  }
  std::set<std::string> names;
  for (const auto& l : spec.layers) {
    if (!valid_name(l.name)) throw Error("invalid layer name '" + l.name + "'");
    if (!names.insert(l.name).second) throw Error("duplicate layer name '" + l.name + "'");
    if (!positive(l.kernel) || !positive(l.stride)) {
      throw Error(l.name + ": kernel and stride entries must be >= 1");
    }
    switch (l.kind) {
      case LayerKind::conv3d:
        if (l.out_channels < 1) throw Error(l.name + ": out channels must be >= 1");
        break;
      case LayerKind::bottleneck:
        if (l.out_channels < 1 || l.mid_channels < 1 || l.repeat < 1) {
          throw Error(l.name + ": mid, out and repeat must be >= 1");
        }
        break;
      default:
        break;
    }
  }
  const HeadSpec& h = spec.head;
  if (h.kind == HeadKind::transformer &&
      (h.layers < 1 || h.dim < 1 || h.heads < 1 || h.head_dim < 1 || h.mlp_dim < 1)) {
    throw Error("transformer head fields must be >= 1");
  }
}

ArchSpec parse_arch(std::string_view text) {
  ArchSpec spec;
  bool have_input = false, have_head = false;
  std::vector<int> layer_lines;
  std::set<std::string> seen;

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto tokens = split_ws(line);
    const std::string_view kw = tokens[0];

    if (kw == "input") {
      if (have_input) throw ParseError(line_no, "input header given twice");
      if (!spec.layers.empty()) throw ParseError(line_no, "input header must come first");
      const LineFields f(line_no, kw, tokens, {"c", "t", "h", "w"});
      spec.input = {f.count("c"), f.count("t"), f.count("h"), f.count("w")};
      have_input = true;
      continue;
    }
    if (!have_input) throw ParseError(line_no, "missing 'input c= t= h= w=' header");

    if (kw == "head") {
      if (have_head) throw ParseError(line_no, "head given twice");
      const LineFields f(line_no, kw, tokens,
                         {"kind", "layers", "dim", "heads", "head_dim", "mlp"});
      const std::string kind = f.text("kind", "transformer");
      HeadSpec h;
      if (kind == "linear") {
        h.kind = HeadKind::linear;
      } else if (kind == "transformer") {
        h.layers = f.count("layers", h.layers);
        h.dim = f.count("dim", h.dim);
        h.heads = f.count("heads", h.heads);
        h.head_dim = f.count("head_dim", h.head_dim);
        h.mlp_dim = f.count("mlp", h.mlp_dim);
      } else {
        throw ParseError(line_no, "unknown head kind '" + kind + "'");
      }
      spec.head = h;
      have_head = true;
      continue;
    }

    LayerSpec layer;
    if (kw == "conv3d") {
      const LineFields f(line_no, kw, tokens, {"name", "out", "k", "s"});
      layer = LayerSpec::conv(f.text("name"), f.count("out"), f.dims("k"), f.dims("s", {}));
    } else if (kw == "maxpool") {
      const LineFields f(line_no, kw, tokens, {"name", "k", "s"});
      const Dims3 k = f.dims("k");
      layer = LayerSpec::pool(f.text("name"), k, f.dims("s", k));
    } else if (kw == "bottleneck") {
      const LineFields f(line_no, kw, tokens,
                         {"name", "mid", "out", "repeat", "kt", "ks", "sdown", "down"});
      const auto ks = f.has("ks") ? f.tuple("ks", 2) : std::vector<int>{1, 1};
      const std::string down = f.text("down", "conv");
      if (down != "conv" && down != "pool") {
        throw ParseError(line_no, "down must be conv or pool, got '" + down + "'");
      }
      layer = LayerSpec::group(f.text("name"), f.count("mid"), f.count("out"), f.count("repeat"),
                               {static_cast<int>(f.count("kt", 1)), ks[0], ks[1]},
                               f.dims("sdown", {}),
                               down == "pool" ? Downsample::pool : Downsample::strided_conv);
    } else if (kw == "savgpool") {
      const LineFields f(line_no, kw, tokens, {"name"});
      layer = LayerSpec::avg_pool(f.text("name"));
    } else {
      throw ParseError(line_no, "unknown keyword '" + std::string(kw) + "'");
    }
    if (!layer.name.empty()) {
      if (!valid_name(layer.name)) throw ParseError(line_no, "invalid name '" + layer.name + "'");
      if (!seen.insert(layer.name).second) {
        throw ParseError(line_no, "duplicate name '" + layer.name + "'");
      }
    }
    spec.layers.push_back(std::move(layer));
    layer_lines.push_back(line_no);
  }
  if (!have_input) throw ParseError(line_no, "missing 'input c= t= h= w=' header");

  std::map<std::string, int> ordinal;
  for (auto& l : spec.layers) {
    if (!l.name.empty()) continue;
    const std::string prefix = auto_prefix(l.kind);
    std::string name;
    do {
      name = prefix + std::to_string(++ordinal[prefix]);
    } while (seen.contains(name));
    seen.insert(name);
    l.name = name;
  }
  validate(spec);
  return spec;
}

std::string render_arch(const ArchSpec& spec) {
  std::ostringstream os;
  const InputShape& in = spec.input;
  os << "input c=" << in.channels << " t=" << in.frames << " h=" << in.height
     << " w=" << in.width << '\n';
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::conv3d:
        os << "conv3d name=" << l.name << " out=" << l.out_channels << " k=" << to_string(l.kernel)
           << " s=" << to_string(l.stride) << '\n';
        break;
      case LayerKind::maxpool3d:
        os << "maxpool name=" << l.name << " k=" << to_string(l.kernel)
           << " s=" << to_string(l.stride) << '\n';
        break;
      case LayerKind::bottleneck:
        os << "bottleneck name=" << l.name << " mid=" << l.mid_channels
           << " out=" << l.out_channels << " repeat=" << l.repeat << " kt=" << l.kernel.t
           << " ks=" << l.kernel.h << 'x' << l.kernel.w << " sdown=" << to_string(l.stride)
           << " down=" << (l.down == Downsample::pool ? "pool" : "conv") << '\n';
        break;
      case LayerKind::spatial_avg_pool:
        os << "savgpool name=" << l.name << '\n';
        break;
    }
  }
  const HeadSpec& h = spec.head;
  if (h.kind == HeadKind::linear) {
    os << "head kind=linear\n";
  } else {
    os << "head kind=transformer layers=" << h.layers << " dim=" << h.dim << " heads=" << h.heads
       << " head_dim=" << h.head_dim << " mlp=" << h.mlp_dim << '\n';
  }
  return os.str();
}

ArchSpec load_arch(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return parse_arch(text);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

void save_arch(const std::string& path, const ArchSpec& spec) {
  write_file(path, render_arch(spec));
}

}  // namespace ftcn::arch
