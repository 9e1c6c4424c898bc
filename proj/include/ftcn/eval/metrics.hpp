#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ftcn/data/manifest.hpp"
#include "ftcn/model/model.hpp"

namespace ftcn::eval {

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs where the
/// positive scores higher, ties counting one half. Labels are 0 or 1.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Non-overlapping windows of `frames` frames from a video [3, T, H, W]; a
/// trailing remainder shorter than `frames` is dropped.
std::vector<Tensor> video_windows(const Tensor& video, std::int64_t frames);

/// Mean clip probability over the video's windows at the model's clip size.
double video_score(model::Model& model, const Tensor& video);

struct ScoredVideo {
  std::string video_id;
  std::string method;
  int label = 0;
  double score = 0;
};

/// Optional per-video input transform (perturbation, shuffle) applied before scoring.
using VideoTransform = std::function<Tensor(const data::Video&)>;

std::vector<ScoredVideo> score_videos(model::Model& model, const std::vector<data::Video>& videos,
                                      const VideoTransform& transform = {});

double auc_of(const std::vector<ScoredVideo>& rows);

}  // namespace ftcn::eval
