#include "ftcn/cli/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "ftcn/arch/canonical.hpp"
#include "ftcn/arch/passes.hpp"
#include "ftcn/arch/plan.hpp"
#include "ftcn/data/manifest.hpp"
#include "ftcn/eval/protocols.hpp"
#include "ftcn/localize/localizer.hpp"
#include "ftcn/model/checkpoint.hpp"
#include "ftcn/model/grad_suite.hpp"
#include "ftcn/tensor/stn_io.hpp"
#include "ftcn/train/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ftcn::cli {

namespace {

// Raised after parsing when flags are individually valid but jointly incomplete.
class UsageError : public Error {
 public:
  using Error::Error;
};

enum class LogLevel { error, info, debug };

struct Context {
  std::ostream& out;
  std::ostream& err;
  LogLevel level = LogLevel::info;
  std::uint64_t seed = 0;
  bool seed_given = false;

  void info(const std::string& msg) const {
    if (level >= LogLevel::info) err << "[info] " << msg << "\n";
  }
  void debug(const std::string& msg) const {
    if (level >= LogLevel::debug) err << "[debug] " << msg << "\n";
  }
};

LogLevel level_from_env() {
  const char* value = std::getenv("FTCNKIT_LOG");
  if (value == nullptr || *value == '\0') return LogLevel::info;
  const std::string v(value);
  if (v == "error") return LogLevel::error;
  if (v == "info") return LogLevel::info;
  if (v == "debug") return LogLevel::debug;
  throw Error("FTCNKIT_LOG must be error, info or debug, got '" + v + "'");
}

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  return text;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
}

std::string format_auc(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

// Shared "--arch FILE | --canonical NAME [--toy]" source.
struct ArchSource {
  std::string file;
  std::string canonical;
  bool toy = false;

  void attach(CLI::App* sub) {
    auto* group = sub->add_option_group("architecture");
    group->add_option("--arch", file, "Architecture text file")->check(CLI::ExistingFile);
    std::vector<std::string> names(arch::canonical_names().begin(), arch::canonical_names().end());
    group->add_option("--canonical", canonical, "Built-in architecture")->check(CLI::IsMember(names));
    group->require_option(1);
    sub->add_flag("--toy", toy, "Use the toy width and input with --canonical");
  }

  arch::ArchSpec load() const {
    if (!file.empty()) return arch::load_arch(file);
    return arch::build_canonical(canonical, toy ? arch::toy_options() : arch::CanonicalOptions{});
  }
};

std::array<std::int64_t, 3> parse_size(const std::string& text) {
  std::array<std::int64_t, 3> dims{};
  std::istringstream in(text);
  for (std::size_t i = 0; i < 3; ++i) {
    if (i > 0 && in.get() != 'x') throw Error("size must look like TxHxW, got '" + text + "'");
    if (!(in >> dims[i]) || dims[i] <= 0) throw Error("size must look like TxHxW, got '" + text + "'");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error("size must look like TxHxW, got '" + text + "'");
  return dims;
}

const CLI::Validator kSize(
    [](std::string& text) {
      try {
        parse_size(text);
      } catch (const Error& e) {
        return std::string(e.what());
      }
      return std::string();
    },
    "TxHxW");

std::vector<std::string> method_names() {
  std::vector<std::string> names;
  for (auto m : data::all_methods()) names.emplace_back(data::to_string(m));
  return names;
}

// Fake methods present in a manifest, in generator order.
std::vector<std::string> manifest_methods(const data::Manifest& manifest) {
  std::set<std::string> present;
  for (const auto& r : manifest.rows) {
    if (r.label == 1) present.insert(r.method);
  }
  std::vector<std::string> out;
  for (const auto& m : method_names()) {
    if (present.contains(m)) out.push_back(m);
  }
  for (const auto& m : present) {
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  return out;
}

std::vector<data::Video> load_split(const data::Manifest& manifest, const std::string& split) {
  auto videos = data::load_videos(manifest, split == "all" ? std::string() : split);
  if (videos.empty()) throw Error("manifest has no videos in split '" + split + "'");
  return videos;
}

// ---- describe ---------------------------------------------------------------

struct Describe {
  ArchSource source;
  std::string out_dir;

  void attach(CLI::App* sub) {
    source.attach(sub);
    sub->add_option("--out", out_dir, "Also write describe.txt and describe.csv here");
  }

  void run(Context& ctx) const {
    const arch::ArchSpec spec = source.load();
    const std::string text = arch::describe_text(spec);
    const std::string csv = arch::describe_csv(spec);
    const arch::ParamBreakdown params = arch::count_params(spec);
    const std::string split_line = "backbone parameters: " + std::to_string(params.backbone) +
                                   "\nhead parameters: " + std::to_string(params.head) + "\n";
    ctx.out << text << split_line << "\n" << csv;
    if (!out_dir.empty()) {
      ensure_dir(out_dir);
      write_file(fs::path(out_dir) / "describe.txt", text + split_line);
      write_file(fs::path(out_dir) / "describe.csv", csv);
      ctx.info("wrote " + (fs::path(out_dir) / "describe.txt").string());
    }
  }
};

// ---- transform --------------------------------------------------------------

struct Transform {
  ArchSource source;
  std::string rule;
  std::string out;

  void attach(CLI::App* sub) {
    source.attach(sub);
    sub->add_option("--rule", rule, "Rewrite rule")
        ->required()
        ->check(CLI::IsMember({"ftcn", "spatial", "fhcn", "fwcn", "fk3", "fk5"}));
    sub->add_option("--out", out, "Output architecture file")->required();
  }

  void run(Context& ctx) const {
    const arch::ArchSpec spec = source.load();
    const arch::ArchSpec result =
        rule == "ftcn" ? arch::ftcn_transform(spec) : arch::variant_transform(spec, arch::parse_variant(rule));
    ensure_parent(out);
    arch::save_arch(out, result);
    ctx.info("wrote " + out + " (" + std::to_string(arch::count_params(result).total()) + " parameters)");
  }
};

// ---- gen-data ---------------------------------------------------------------

struct GenData {
  std::string out;
  std::int64_t real = 8;
  std::int64_t fake = 8;
  std::vector<std::string> methods{"flickerA"};
  std::string size = "16x32x32";
  double strength = 0.3;
  std::vector<double> split{0.6, 0.2, 0.2};

  void attach(CLI::App* sub) {
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--real", real, "Real videos")->check(CLI::NonNegativeNumber);
    sub->add_option("--fake", fake, "Fake videos per method")->check(CLI::NonNegativeNumber);
    sub->add_option("--methods", methods, "Comma-separated fake methods")
        ->delimiter(',')
        ->check(CLI::IsMember(method_names()));
    sub->add_option("--size", size, "Frames x height x width")->check(kSize);
    sub->add_option("--strength", strength, "Artifact strength")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--split", split, "Train,val,test fractions")->delimiter(',')->expected(3);
  }

  void run(Context& ctx) const {
    data::DatasetSpec spec;
    spec.real = real;
    spec.fake = fake;
    spec.methods.clear();
    for (const auto& m : methods) spec.methods.push_back(data::parse_method(m));
    const auto dims = parse_size(size);
    spec.frames = dims[0];
    spec.height = dims[1];
    spec.width = dims[2];
    spec.seed = ctx.seed;
    spec.strength = strength;
    spec.split = {split[0], split[1], split[2]};
    const data::Manifest manifest = data::build_manifest(spec, out);
    ctx.info("wrote " + std::to_string(manifest.rows.size()) + " videos and " +
             (fs::path(out) / "manifest.jsonl").string());
  }
};

// ---- train ------------------------------------------------------------------

struct Train {
  std::string arch_file;
  std::string data;
  std::string config_file;
  std::string out;

  void attach(CLI::App* sub) {
    sub->add_option("--arch", arch_file, "Architecture text file")->required()->check(CLI::ExistingFile);
    sub->add_option("--data", data, "Manifest (manifest.jsonl)")->required()->check(CLI::ExistingFile);
    sub->add_option("--config", config_file, "Training config (key = value)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory")->required();
  }

  void run(Context& ctx) const {
    train::TrainConfig config = train::load_config(config_file);
    if (ctx.seed_given) config.seed = ctx.seed;
    arch::ArchSpec spec = arch::load_arch(arch_file);
    if (spec.input.frames != config.clip_frames) {
      ctx.debug("clip_frames " + std::to_string(config.clip_frames) + " replaces the architecture's " +
                std::to_string(spec.input.frames) + " input frames");
      spec.input.frames = config.clip_frames;
    }
    std::string rendered = train::render_config(config);
    while (!rendered.empty() && rendered.back() == '\n') rendered.pop_back();
    ctx.err << "train config: " << std::regex_replace(rendered, std::regex("\n"), "; ") << "\n";
    const data::Manifest manifest = data::read_manifest(data);
    const auto train_set = load_split(manifest, "train");
    const auto val_set = load_split(manifest, "val");
    ctx.info("training on " + std::to_string(train_set.size()) + " videos, validating on " +
             std::to_string(val_set.size()));

    model::Model m(spec, config.seed);
    const auto result = train::train(m, train_set, val_set, config, [&](const train::EpochLog& e) {
      ctx.info("epoch " + std::to_string(e.epoch) + " lr " + std::to_string(e.lr) + " loss " +
               std::to_string(e.train_loss) + " val_auc " + format_auc(e.val_auc));
    });
    const model::Model best(spec, result.best_params, result.best_stats);
    ensure_dir(out);
    model::save_checkpoint(fs::path(out) / "checkpoint", best);
    write_file(fs::path(out) / "train_log.csv", train::log_csv(result.log));
    write_file(fs::path(out) / "config.txt", train::render_config(config));
    ctx.out << "best_epoch " << result.best_epoch << " val_auc " << format_auc(result.best_auc) << "\n";
    ctx.info("wrote " + (fs::path(out) / "checkpoint").string());
  }
};

// ---- eval -------------------------------------------------------------------

struct Eval {
  std::string ckpt;
  std::vector<std::string> data;
  std::string protocol;
  std::string out;
  std::string config_file;
  std::string split = "test";
  std::string label = "model";

  void attach(CLI::App* sub) {
    sub->add_option("--ckpt", ckpt, "Checkpoint directory or bundle")->required()->check(CLI::ExistingPath);
    sub->add_option("--data", data, "Manifest; repeat for cross-set")->required()->check(CLI::ExistingFile);
    sub->add_option("--protocol", protocol, "Evaluation protocol")
        ->required()
        ->check(CLI::IsMember({"plain", "loo", "cross-set", "robustness"}));
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--config", config_file, "Training config (loo only)")->check(CLI::ExistingFile);
    sub->add_option("--split", split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test", "all"}));
    sub->add_option("--label", label, "Row label of grid.csv");
  }

  void run(Context& ctx) const {
    if (protocol == "loo" && config_file.empty()) throw UsageError("--config is required for --protocol loo");
    if (protocol != "cross-set" && data.size() > 1) throw UsageError("only cross-set takes several --data");
    model::Model m = model::load_model(ckpt);
    std::vector<eval::EvalReport> reports;
    if (protocol == "plain") {
      reports.push_back(eval::evaluate(m, load_split(data::read_manifest(data[0]), split), split));
    } else if (protocol == "robustness") {
      reports = eval::robustness(m, load_split(data::read_manifest(data[0]), split), ctx.seed);
    } else if (protocol == "cross-set") {
      reports = eval::cross_set(m, cross_sets());
    } else {
      train::TrainConfig config = train::load_config(config_file);
      if (ctx.seed_given) config.seed = ctx.seed;
      arch::ArchSpec spec = m.spec();
      spec.input.frames = config.clip_frames;
      const data::Manifest manifest = data::read_manifest(data[0]);
      reports = eval::leave_one_out(spec, manifest, manifest_methods(manifest), config, config.seed,
                                    [&](const std::string& held, const train::EpochLog& e) {
                                      ctx.info("held-out " + held + " epoch " + std::to_string(e.epoch) +
                                               " loss " + std::to_string(e.train_loss));
                                    });
    }
    ensure_dir(out);
    const std::string grid =
        protocol == "robustness" ? eval::robustness_grid_csv(reports) : eval::grid_csv(reports, label);
    write_file(fs::path(out) / "grid.csv", grid);
    write_file(fs::path(out) / "videos.csv", eval::videos_csv(reports));
    write_file(fs::path(out) / "methods.csv", eval::method_csv(reports));
    if (protocol == "robustness") write_file(fs::path(out) / "curves.csv", eval::curves_csv(reports));
    ctx.out << grid;
    ctx.info("wrote " + (fs::path(out) / "grid.csv").string());
  }

  // Several manifests: one set each, named after its directory. One manifest:
  // one set per fake method, each with every real video of the split.
  std::vector<eval::NamedSet> cross_sets() const {
    std::vector<eval::NamedSet> sets;
    if (data.size() > 1) {
      std::map<std::string, int> seen;
      for (const auto& file : data) {
        std::string name = fs::absolute(file).parent_path().filename().string();
        if (seen[name]++ > 0) name += "#" + std::to_string(seen[name] - 1);
        sets.push_back({name, load_split(data::read_manifest(file), split)});
      }
      return sets;
    }
    const data::Manifest manifest = data::read_manifest(data[0]);
    const auto videos = load_split(manifest, split);
    for (const auto& method : manifest_methods(manifest)) {
      eval::NamedSet s{method, {}};
      for (const auto& v : videos) {
        if (v.label == 0 || v.method == method) s.videos.push_back(v);
      }
      sets.push_back(std::move(s));
    }
    return sets;
  }
};

// ---- localize ---------------------------------------------------------------

struct Localize {
  std::string ckpt;
  std::string clip_file;
  std::int64_t window = 0;
  std::int64_t stride = 0;
  std::string out;

  void attach(CLI::App* sub) {
    sub->add_option("--ckpt", ckpt, "Checkpoint directory or bundle")->required()->check(CLI::ExistingPath);
    sub->add_option("--clip", clip_file, "Clip [3,T,H,W] in STN1")->required()->check(CLI::ExistingFile);
    sub->add_option("--window", window, "Window side in pixels (0: H/2)")->check(CLI::NonNegativeNumber);
    sub->add_option("--stride", stride, "Stride in pixels (0: H/8)")->check(CLI::NonNegativeNumber);
    sub->add_option("--out", out, "Output PPM")->required();
  }

  void run(Context& ctx) const {
    model::Model m = model::load_model(ckpt);
    const Tensor clip = read_stn(clip_file);
    if (clip.rank() != 4 || clip.dim(0) != 3) throw ShapeError("clip must be [3, T, H, W], got " + to_string(clip.shape()));
    const std::int64_t h = clip.dim(2), w = clip.dim(3);
    const std::int64_t win = window > 0 ? window : localize::default_window(std::min(h, w));
    const std::int64_t step = stride > 0 ? stride : localize::default_stride(std::min(h, w));
    const localize::HeatMap map =
        localize::localize(m, clip, win, step, fs::path(clip_file).stem().string());
    Tensor base({3, h, w});
    for (std::int64_t c = 0; c < 3; ++c) {
      for (std::int64_t i = 0; i < h * w; ++i) {
        base[c * h * w + i] = std::clamp(clip[c * clip.dim(1) * h * w + i], 0.0f, 1.0f);
      }
    }
    ensure_parent(out);
    localize::render_heatmap(map, out, base);
    const auto [row, col] = localize::argmax(map);
    const auto center = localize::cell_center(map, row, col);
    ctx.out << "grid " << map.rows() << "x" << map.cols() << " window " << win << " stride " << step << "\n";
    ctx.out << "argmax " << row << " " << col << " center " << center[0] << " " << center[1] << " score "
            << std::setprecision(6) << map.grid[row * map.cols() + col] << "\n";
    ctx.info("wrote " + out);
  }
};

// ---- gradcheck --------------------------------------------------------------

struct GradCheck {
  int trials = 5;
  std::string out;

  void attach(CLI::App* sub) {
    sub->add_option("--trials", trials, "Random shapes per operation")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "Also write the table as CSV");
  }

  void run(Context& ctx) const {
    const auto rows = model::gradient_suite({.trials = trials, .seed = ctx.seed});
    const std::string csv = model::gradient_suite_csv(rows);
    ctx.out << csv;
    if (!out.empty()) {
      ensure_parent(out);
      write_file(out, csv);
    }
    for (const auto& r : rows) {
      if (!r.passed) {
        throw Error("gradient check failed for " + r.op + " trial " + std::to_string(r.trial) +
                    " max_rel_error " + std::to_string(r.max_rel_error));
      }
    }
    ctx.info("all " + std::to_string(rows.size()) + " checks passed");
  }
};

// ---- export-features --------------------------------------------------------

struct ExportFeatures {
  std::string ckpt;
  std::string data;
  std::string out;
  std::string split = "all";

  void attach(CLI::App* sub) {
    sub->add_option("--ckpt", ckpt, "Checkpoint directory or bundle")->required()->check(CLI::ExistingPath);
    sub->add_option("--data", data, "Manifest")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output CSV")->required();
    sub->add_option("--split", split, "Split to export")->check(CLI::IsMember({"train", "val", "test", "all"}));
  }

  void run(Context& ctx) const {
    model::Model m = model::load_model(ckpt);
    const auto videos = load_split(data::read_manifest(data), split);
    ensure_parent(out);
    write_file(out, eval::export_features(m, videos));
    ctx.info("wrote features of " + std::to_string(videos.size()) + " videos to " + out);
  }
};

json resolved_config(const CLI::App& app, const CLI::App& sub) {
  json config;
  config["subcommand"] = sub.get_name();
  auto dump = [](const CLI::App& a, json& into) {
    for (const CLI::Option* opt : a.get_options()) {
      if (opt->get_name() == "--help") continue;
      const std::string key = opt->get_name().substr(opt->get_name().find_first_not_of('-'));
      if (opt->count() > 0) {
        const auto& results = opt->results();
        into[key] = results.size() == 1 ? json(results.front()) : json(results);
      } else if (opt->get_expected_max() == 0 || opt->get_type_size_max() == 0) {
        into[key] = false;
      } else {
        into[key] = opt->get_default_str();
      }
    }
  };
  dump(app, config);
  dump(sub, config);
  for (const CLI::App* group : sub.get_subcommands([](const CLI::App*) { return true; })) dump(*group, config);
  return config;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fully temporal convolution toolkit", "ftcnkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();

  std::uint64_t seed = 0;
  int threads = 0;
  bool verbose = false;
  CLI::Option* seed_opt = app.add_option("--seed", seed, "Seed for every random choice");
  app.add_option("--threads", threads, "OpenMP threads (0: runtime default)")->check(CLI::NonNegativeNumber);
  app.add_flag("--verbose", verbose, "Debug logging");

  Describe describe;
  Transform transform;
  GenData gen_data;
  Train train;
  Eval evaluate;
  Localize localize;
  GradCheck gradcheck;
  ExportFeatures export_features;

  std::vector<std::pair<CLI::App*, std::function<void(Context&)>>> commands;
  auto add = [&](const std::string& name, const std::string& help, auto& command) {
    CLI::App* sub = app.add_subcommand(name, help);
    command.attach(sub);
    commands.emplace_back(sub, [&command](Context& ctx) { command.run(ctx); });
  };
  add("describe", "Print an architecture's stage shapes and parameter counts", describe);
  add("transform", "Apply an architecture rewrite rule", transform);
  add("gen-data", "Generate a synthetic clip dataset", gen_data);
  add("train", "Train a model and write its checkpoint", train);
  add("eval", "Evaluate a checkpoint under a protocol", evaluate);
  add("localize", "Render a sliding-window heat map", localize);
  add("gradcheck", "Run the finite-difference gradient suite", gradcheck);
  add("export-features", "Write per-clip features as CSV", export_features);

  auto usage = [&](const std::string& message) {
    err << "error: usage: " << one_line(message) << "\n";
    const auto parsed = app.get_subcommands();
    err << (parsed.empty() ? app.help() : parsed.front()->help());
    return 2;
  };

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    return usage(e.what());
  }

  try {
    Context ctx{out, err};
    ctx.level = verbose ? LogLevel::debug : level_from_env();
    ctx.seed = seed;
    ctx.seed_given = seed_opt->count() > 0;
    if (threads > 0) omp_set_num_threads(threads);
    for (auto& [sub, action] : commands) {
      if (!sub->parsed()) continue;
      err << "config: " << resolved_config(app, *sub).dump() << "\n";
      action(ctx);
    }
    return 0;
  } catch (const UsageError& e) {
    return usage(e.what());
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
}

}  // namespace ftcn::cli
