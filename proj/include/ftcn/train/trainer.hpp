#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ftcn/data/manifest.hpp"
#include "ftcn/model/model.hpp"

namespace ftcn::train {

struct TrainConfig {
  std::int64_t batch_size = 32;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::int64_t warmup_epochs = 10;
  std::int64_t epochs = 100;
  double lr_start = 0.01;
  double lr_peak = 0.1;
  std::uint64_t seed = 0;
  /// Frames per training clip.
  std::int64_t clip_frames = 32;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& config);

/// Flat "key = value" text, one field per line, '#' comments. Unknown keys
/// and malformed values are errors; missing keys keep their defaults.
TrainConfig parse_config(std::string_view text);
std::string render_config(const TrainConfig& config);
TrainConfig load_config(const std::filesystem::path& file);

/// Linear warm-up from lr_start to lr_peak over the first warmup_epochs, then
/// a cosine decay to 0 at `epochs`.
double lr_schedule(std::int64_t epoch, const TrainConfig& config);

/// Binary cross-entropy of a logit against a label in {0, 1}, in the
/// log-sum-exp form.
double bce_loss(double logit, int label);

using TensorMap = std::map<std::string, Tensor>;

/// v <- momentum * v + g + weight_decay * p; p <- p - lr * v. Weight decay only
/// touches names accepted by `decay` (every name when it is empty). Missing
/// velocities start at zero.
void sgd_step(TensorMap& params, const TensorMap& grads, double lr, double momentum,
              double weight_decay, TensorMap& velocity,
              const std::function<bool(const std::string&)>& decay = {});

struct EpochLog {
  std::int64_t epoch = 0;
  double lr = 0;
  double train_loss = 0;
  /// NaN when the validation set lacks either class.
  double val_auc = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::int64_t best_epoch = 0;
  double best_auc = 0;
  model::ParamMap best_params;
  model::StatsMap best_stats;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains `model` in place. Each epoch visits the training videos in a
/// seeded order, taking one random clip_frames window per video, and scores
/// the validation videos by mean clip probability. The parameters of the
/// epoch with the highest validation AUC (earliest on ties; the last epoch
/// when AUC is undefined) are returned in the result.
TrainResult train(model::Model& model, const std::vector<data::Video>& train_set,
                  const std::vector<data::Video>& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// CSV with header "epoch,lr,train_loss,val_auc".
std::string log_csv(const std::vector<EpochLog>& log);

}  // namespace ftcn::train
