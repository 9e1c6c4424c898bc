#include "ftcn/eval/protocols.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "ftcn/data/synth.hpp"

namespace ftcn::eval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double safe_auc(const std::vector<ScoredVideo>& rows) {
  bool pos = false, neg = false;
  for (const auto& r : rows) (r.label ? pos : neg) = true;
  return pos && neg ? auc_of(rows) : kNaN;
}

std::string number(double v, int digits = 6) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

double mean_defined(const std::vector<double>& values) {
  double total = 0;
  int n = 0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    total += v;
    ++n;
  }
  return n ? total / n : kNaN;
}

std::vector<data::Video> without_method(std::vector<data::Video> videos, const std::string& method) {
  std::erase_if(videos, [&](const data::Video& v) { return v.label == 1 && v.method == method; });
  return videos;
}

}  // namespace

EvalReport make_report(std::string protocol, std::string name, std::vector<ScoredVideo> rows,
                       std::string perturbation, int level) {
  EvalReport r;
  r.protocol = std::move(protocol);
  r.name = std::move(name);
  r.perturbation = std::move(perturbation);
  r.level = level;
  r.rows = std::move(rows);
  r.auc = safe_auc(r.rows);
  std::set<std::string> methods;
  for (const auto& row : r.rows) {
    if (row.label == 1) methods.insert(row.method);
  }
  for (const auto& m : methods) {
    std::vector<ScoredVideo> subset;
    for (const auto& row : r.rows) {
      if (row.label == 0 || row.method == m) subset.push_back(row);
    }
    r.method_auc[m] = safe_auc(subset);
  }
  return r;
}

EvalReport evaluate(model::Model& model, const std::vector<data::Video>& videos, const std::string& name) {
  return make_report("plain", name, score_videos(model, videos));
}

std::vector<EvalReport> cross_set(model::Model& model, const std::vector<NamedSet>& sets) {
  std::vector<EvalReport> out;
  for (const auto& s : sets) out.push_back(make_report("cross-set", s.name, score_videos(model, s.videos)));
  return out;
}

std::vector<EvalReport> robustness(model::Model& model, const std::vector<data::Video>& videos,
                                   std::uint64_t seed) {
  std::vector<EvalReport> out;
  for (data::Perturbation kind : data::all_perturbations()) {
    for (int level = 0; level <= 5; ++level) {
      auto rows = score_videos(model, videos, [&](const data::Video& v) {
        return data::perturb(v.pixels, kind, level, data::video_seed(seed, v.video_id));
      });
      out.push_back(make_report("robustness", "test", std::move(rows), std::string(data::to_string(kind)), level));
    }
  }
  return out;
}

std::vector<EvalReport> leave_one_out(const arch::ArchSpec& spec, const data::Manifest& manifest,
                                      const std::vector<std::string>& methods,
                                      const train::TrainConfig& config, std::uint64_t model_seed,
                                      const LooCallback& on_epoch) {
  if (methods.empty()) throw Error("leave-one-out needs at least one method");
  std::set<std::string> present;
  for (const auto& r : manifest.rows) {
    if (r.label == 1) present.insert(r.method);
  }
  for (const auto& m : methods) {
    if (!present.contains(m)) throw Error("manifest has no fake videos of method '" + m + "'");
  }
  const auto train_all = data::load_videos(manifest, "train");
  const auto val_all = data::load_videos(manifest, "val");
  const auto test_all = data::load_videos(manifest, "test");

  std::vector<EvalReport> out;
  for (const auto& held : methods) {
    std::vector<data::Video> test;
    for (const auto& v : test_all) {
      if (v.label == 0 || v.method == held) test.push_back(v);
    }
    model::Model m(spec, model_seed);
    const auto result = train::train(m, without_method(train_all, held), without_method(val_all, held), config,
                                     [&](const train::EpochLog& e) {
                                       if (on_epoch) on_epoch(held, e);
                                     });
    model::Model best(spec, result.best_params, result.best_stats);
    out.push_back(make_report("loo", held, score_videos(best, test)));
  }
  return out;
}

std::string grid_csv(const std::vector<EvalReport>& reports, const std::string& row_label) {
  std::ostringstream os;
  os << "model";
  for (const auto& r : reports) os << "," << r.name;
  os << ",Avg\n" << row_label;
  std::vector<double> values;
  for (const auto& r : reports) {
    os << "," << number(r.auc);
    values.push_back(r.auc);
  }
  os << "," << number(mean_defined(values)) << "\n";
  return os.str();
}

std::string robustness_grid_csv(const std::vector<EvalReport>& reports) {
  std::vector<std::string> kinds;
  std::map<std::string, std::map<int, double>> cells;
  for (const auto& r : reports) {
    if (!cells.contains(r.perturbation)) kinds.push_back(r.perturbation);
    cells[r.perturbation][r.level] = r.auc;
  }
  std::ostringstream os;
  os << "perturbation,0,1,2,3,4,5,Avg\n";
  for (const auto& k : kinds) {
    os << k;
    std::vector<double> perturbed;
    for (int level = 0; level <= 5; ++level) {
      const auto it = cells[k].find(level);
      const double v = it == cells[k].end() ? kNaN : it->second;
      os << "," << number(v);
      if (level > 0) perturbed.push_back(v);
    }
    os << "," << number(mean_defined(perturbed)) << "\n";
  }
  return os.str();
}

std::string curves_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "perturbation,level,auc\n";
  for (const auto& r : reports) os << r.perturbation << "," << r.level << "," << number(r.auc) << "\n";
  return os.str();
}

std::string method_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "name,perturbation,level,method,auc\n";
  for (const auto& r : reports) {
    for (const auto& [method, auc] : r.method_auc) {
      os << r.name << "," << r.perturbation << "," << r.level << "," << method << "," << number(auc) << "\n";
    }
  }
  return os.str();
}

std::string videos_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "protocol,name,perturbation,level,video_id,method,label,score\n";
  for (const auto& r : reports) {
    for (const auto& row : r.rows) {
      os << r.protocol << "," << r.name << "," << r.perturbation << "," << r.level << "," << row.video_id << ","
         << row.method << "," << row.label << "," << number(row.score, 9) << "\n";
    }
  }
  return os.str();
}

std::string export_features(model::Model& model, const std::vector<data::Video>& videos) {
  std::ostringstream os;
  std::int64_t dim = -1;
  for (const auto& v : videos) {
    const auto windows = video_windows(v.pixels, model.spec().input.frames);
    for (std::size_t k = 0; k < windows.size(); ++k) {
      const Tensor f = model.features(windows[k]);
      if (dim < 0) {
        dim = f.size();
        os << "clip_id,label,method";
        for (std::int64_t i = 0; i < dim; ++i) os << ",f" << i;
        os << "\n";
      }
      os << v.video_id << "#" << k << "," << v.label << "," << v.method;
      for (float x : f.data()) os << "," << std::setprecision(9) << x;
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace ftcn::eval
