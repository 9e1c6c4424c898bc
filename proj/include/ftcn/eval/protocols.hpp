#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ftcn/arch/spec.hpp"
#include "ftcn/data/manifest.hpp"
#include "ftcn/eval/metrics.hpp"
#include "ftcn/train/trainer.hpp"

namespace ftcn::eval {

struct EvalReport {
  /// plain | loo | cross-set | robustness
  std::string protocol;
  /// Held-out method, set name, or "test".
  std::string name;
  /// Empty when the videos were not perturbed.
  std::string perturbation;
  int level = 0;
  std::vector<ScoredVideo> rows;
  /// NaN when the rows lack a class.
  double auc = 0;
  /// AUC of each fake method's videos against every real video.
  std::map<std::string, double> method_auc;
};

/// Computes the overall and per-method AUC of `rows`.
EvalReport make_report(std::string protocol, std::string name, std::vector<ScoredVideo> rows,
                       std::string perturbation = {}, int level = 0);

EvalReport evaluate(model::Model& model, const std::vector<data::Video>& videos,
                    const std::string& name = "test");

struct NamedSet {
  std::string name;
  std::vector<data::Video> videos;
};

/// One report per set, all scored by the same model.
std::vector<EvalReport> cross_set(model::Model& model, const std::vector<NamedSet>& sets);

/// One report per (perturbation, level) for levels 0..5. Block positions for
/// a video are seeded by (seed, video id).
std::vector<EvalReport> robustness(model::Model& model, const std::vector<data::Video>& videos,
                                   std::uint64_t seed);

using LooCallback = std::function<void(const std::string& held_out, const train::EpochLog&)>;

/// For each method: trains a fresh model (init seed `model_seed`) on the
/// manifest's train split without that method, selects on the val split
/// without it, and tests on the test split's reals plus that method's fakes.
std::vector<EvalReport> leave_one_out(const arch::ArchSpec& spec, const data::Manifest& manifest,
                                      const std::vector<std::string>& methods,
                                      const train::TrainConfig& config, std::uint64_t model_seed,
                                      const LooCallback& on_epoch = {});

/// Table-shaped grid: a header of report names plus "Avg", then one row
/// labelled `row_label` holding each report's AUC and their mean.
std::string grid_csv(const std::vector<EvalReport>& reports, const std::string& row_label);

/// Robustness grid: one row per perturbation, one column per level, then
/// "Avg" over levels 1..5.
std::string robustness_grid_csv(const std::vector<EvalReport>& reports);

/// Long-form curves "perturbation,level,auc".
std::string curves_csv(const std::vector<EvalReport>& reports);

/// Long-form per-method AUCs "name,perturbation,level,method,auc".
std::string method_csv(const std::vector<EvalReport>& reports);

/// One line per scored video of every report.
std::string videos_csv(const std::vector<EvalReport>& reports);

/// One row per clip (every non-overlapping window of every video):
/// clip_id, label, method, then the model's D feature values.
std::string export_features(model::Model& model, const std::vector<data::Video>& videos);

}  // namespace ftcn::eval
