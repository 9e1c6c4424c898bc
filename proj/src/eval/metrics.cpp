#include "ftcn/eval/metrics.hpp"

#include <algorithm>
#include <exception>
#include <numeric>

namespace ftcn::eval {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error("auc: " + std::to_string(scores.size()) + " scores for " +
                std::to_string(labels.size()) + " labels");
  }
  std::size_t positives = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw Error("auc: labels must be 0 or 1, got " + std::to_string(l));
    positives += static_cast<std::size_t>(l);
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw Error("auc: needs both classes, got " + std::to_string(positives) + " positive and " +
                std::to_string(negatives) + " negative");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Rank sum of positives with tied groups sharing their mean rank; all
  // quantities are exact half-integers.
  double rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) rank_sum += mid;
    }
    i = j;
  }
  const double p = static_cast<double>(positives);
  return (rank_sum - p * (p + 1) / 2) / (p * static_cast<double>(negatives));
}

std::vector<Tensor> video_windows(const Tensor& video, std::int64_t frames) {
  if (video.rank() != 4) throw ShapeError("video must be [C, T, H, W], got " + to_string(video.shape()));
  const std::int64_t c = video.dim(0), t = video.dim(1), plane = video.dim(2) * video.dim(3);
  if (frames < 1 || t < frames) {
    throw ShapeError("video of " + std::to_string(t) + " frames is shorter than one " +
                     std::to_string(frames) + "-frame clip");
  }
  std::vector<Tensor> out;
  for (std::int64_t start = 0; start + frames <= t; start += frames) {
    Tensor clip({c, frames, video.dim(2), video.dim(3)});
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const auto src = video.data().subspan(static_cast<std::size_t>((ch * t + start) * plane),
                                            static_cast<std::size_t>(frames * plane));
      std::copy(src.begin(), src.end(),
                clip.data().begin() + static_cast<std::ptrdiff_t>(ch * frames * plane));
    }
    out.push_back(std::move(clip));
  }
  return out;
}

double video_score(model::Model& model, const Tensor& video) {
  const auto windows = video_windows(video, model.spec().input.frames);
  std::vector<double> probs;
  probs.reserve(windows.size());
  for (const auto& w : windows) probs.push_back(model.predict(w)[0]);
  // Summing in sorted order makes the score independent of clip order.
  std::sort(probs.begin(), probs.end());
  double total = 0;
  for (double p : probs) total += p;
  return total / static_cast<double>(probs.size());
}

std::vector<ScoredVideo> score_videos(model::Model& model, const std::vector<data::Video>& videos,
                                      const VideoTransform& transform) {
  std::vector<ScoredVideo> out(videos.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < videos.size(); ++i) {
    try {
      const auto& v = videos[i];
      out[i] = {v.video_id, v.method, v.label, video_score(model, transform ? transform(v) : v.pixels)};
    } catch (...) {
#pragma omp critical(ftcn_score_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

double auc_of(const std::vector<ScoredVideo>& rows) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& r : rows) {
    scores.push_back(r.score);
    labels.push_back(r.label);
  }
  return auc(scores, labels);
}

}  // namespace ftcn::eval
