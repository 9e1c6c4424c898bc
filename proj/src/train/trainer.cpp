#include "ftcn/train/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "ftcn/eval/metrics.hpp"
#include "ftcn/tensor/stn_io.hpp"

namespace ftcn::train {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text, int line) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error("config line " + std::to_string(line) + ": bad value '" + text + "' for " + key);
  }
  return value;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

Tensor make_batch(const std::vector<const Tensor*>& clips) {
  const Shape& one = clips.front()->shape();
  Shape shape{static_cast<std::int64_t>(clips.size())};
  shape.insert(shape.end(), one.begin(), one.end());
  Tensor batch(shape);
  auto dst = batch.data().begin();
  for (const Tensor* c : clips) dst = std::copy(c->data().begin(), c->data().end(), dst);
  return batch;
}

Tensor window(const Tensor& video, std::int64_t start, std::int64_t frames) {
  const std::int64_t c = video.dim(0), t = video.dim(1), plane = video.dim(2) * video.dim(3);
  Tensor out({c, frames, video.dim(2), video.dim(3)});
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const auto src = video.data().subspan(static_cast<std::size_t>((ch * t + start) * plane),
                                          static_cast<std::size_t>(frames * plane));
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(ch * frames * plane));
  }
  return out;
}

double validation_auc(model::Model& m, const std::vector<data::Video>& val) {
  bool pos = false, neg = false;
  for (const auto& v : val) (v.label ? pos : neg) = true;
  if (!pos || !neg) return std::numeric_limits<double>::quiet_NaN();
  return eval::auc_of(eval::score_videos(m, val));
}

}  // namespace

void validate(const TrainConfig& c) {
  if (c.batch_size < 1) throw Error("batch_size must be at least 1");
  if (c.epochs < 1) throw Error("epochs must be at least 1");
  if (c.warmup_epochs < 0 || c.warmup_epochs >= c.epochs) {
    throw Error("warmup_epochs must be in [0, epochs)");
  }
  if (!(c.lr_start > 0) || !(c.lr_peak > 0)) throw Error("learning rates must be positive");
  if (c.momentum < 0 || !(c.momentum < 1)) throw Error("momentum must be in [0, 1)");
  if (c.weight_decay < 0) throw Error("weight_decay must be non-negative");
  if (c.clip_frames < 1) throw Error("clip_frames must be at least 1");
}

TrainConfig parse_config(std::string_view text) {
  TrainConfig c;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    const std::string content = trim(raw);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw Error("config line " + std::to_string(line) + ": expected key = value");
    }
    const std::string key = trim(content.substr(0, eq));
    const std::string value = trim(content.substr(eq + 1));
    if (key == "batch_size") c.batch_size = parse_number<std::int64_t>(key, value, line);
    else if (key == "momentum") c.momentum = parse_number<double>(key, value, line);
    else if (key == "weight_decay") c.weight_decay = parse_number<double>(key, value, line);
    else if (key == "warmup_epochs") c.warmup_epochs = parse_number<std::int64_t>(key, value, line);
    else if (key == "epochs") c.epochs = parse_number<std::int64_t>(key, value, line);
    else if (key == "lr_start") c.lr_start = parse_number<double>(key, value, line);
    else if (key == "lr_peak") c.lr_peak = parse_number<double>(key, value, line);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value, line);
    else if (key == "clip_frames") c.clip_frames = parse_number<std::int64_t>(key, value, line);
    else throw Error("config line " + std::to_string(line) + ": unknown key '" + key + "'");
  }
  validate(c);
  return c;
}

std::string render_config(const TrainConfig& c) {
  std::ostringstream os;
  os << "batch_size = " << c.batch_size << "\n"
     << "momentum = " << format_double(c.momentum) << "\n"
     << "weight_decay = " << format_double(c.weight_decay) << "\n"
     << "warmup_epochs = " << c.warmup_epochs << "\n"
     << "epochs = " << c.epochs << "\n"
     << "lr_start = " << format_double(c.lr_start) << "\n"
     << "lr_peak = " << format_double(c.lr_peak) << "\n"
     << "seed = " << c.seed << "\n"
     << "clip_frames = " << c.clip_frames << "\n";
  return os.str();
}

TrainConfig load_config(const std::filesystem::path& file) { return parse_config(read_file(file)); }

double lr_schedule(std::int64_t epoch, const TrainConfig& c) {
  if (epoch < 0 || epoch > c.epochs) {
    throw Error("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(c.epochs) + "]");
  }
  const auto e = static_cast<double>(epoch);
  const auto warm = static_cast<double>(c.warmup_epochs);
  if (epoch < c.warmup_epochs) return c.lr_start + (c.lr_peak - c.lr_start) * e / warm;
  const double progress = (e - warm) / (static_cast<double>(c.epochs) - warm);
  return c.lr_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double bce_loss(double logit, int label) {
  if (label != 0 && label != 1) throw Error("bce_loss: label must be 0 or 1, got " + std::to_string(label));
  return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

void sgd_step(TensorMap& params, const TensorMap& grads, double lr, double momentum,
              double weight_decay, TensorMap& velocity,
              const std::function<bool(const std::string&)>& decay) {
  for (const auto& [name, g] : grads) {
    const auto it = params.find(name);
    if (it == params.end()) throw Error("sgd_step: gradient for unknown parameter '" + name + "'");
    if (it->second.shape() != g.shape()) {
      throw ShapeError("sgd_step: gradient of '" + name + "' is " + to_string(g.shape()) +
                       ", parameter is " + to_string(it->second.shape()));
    }
  }
  for (auto& [name, p] : params) {
    const auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    auto [vit, fresh] = velocity.try_emplace(name, Tensor(p.shape(), 0.0f));
    Tensor& v = vit->second;
    if (v.shape() != p.shape()) throw ShapeError("sgd_step: velocity of '" + name + "' has the wrong shape");
    const double wd = (!decay || decay(name)) ? weight_decay : 0.0;
    for (std::int64_t i = 0; i < p.size(); ++i) {
      const double vi = momentum * v[i] + g[i] + wd * p[i];
      v[i] = static_cast<float>(vi);
      p[i] = static_cast<float>(p[i] - lr * vi);
    }
  }
}

TrainResult train(model::Model& m, const std::vector<data::Video>& train_set,
                  const std::vector<data::Video>& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  validate(config);
  if (train_set.empty()) throw Error("training set is empty");
  if (m.spec().input.frames != config.clip_frames) {
    throw Error("model takes " + std::to_string(m.spec().input.frames) +
                "-frame clips but clip_frames is " + std::to_string(config.clip_frames));
  }
  for (const auto& v : train_set) {
    if (v.label != 0 && v.label != 1) throw Error("video '" + v.video_id + "' has a non-binary label");
    if (v.pixels.dim(1) < config.clip_frames) {
      throw Error("video '" + v.video_id + "' has " + std::to_string(v.pixels.dim(1)) +
                  " frames, fewer than clip_frames");
    }
  }

  TrainResult result;
  result.best_auc = -1;
  TensorMap velocity;
  for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, config);
    std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch) + 1);
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Tensor> clips(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      const Tensor& video = train_set[order[k]].pixels;
      const auto span = static_cast<std::uint64_t>(video.dim(1) - config.clip_frames + 1);
      clips[k] = window(video, static_cast<std::int64_t>(rng() % span), config.clip_frames);
    }

    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<const Tensor*> members;
      std::vector<float> labels;
      for (std::size_t k = start; k < end; ++k) {
        members.push_back(&clips[k]);
        labels.push_back(static_cast<float>(train_set[order[k]].label));
      }
      Tape<float> tape;
      const model::ForwardResult r = m.forward(tape, make_batch(members), Mode::train, true);
      const Var loss = nn::bce_with_logits(tape, r.logits, labels);
      loss_sum += static_cast<double>(tape.value(loss)[0]) * static_cast<double>(end - start);
      const auto grads = tape.backward(loss);
      TensorMap g(grads.begin(), grads.end());
      sgd_step(m.params(), g, lr, config.momentum, config.weight_decay, velocity, model::decays);
    }

    // The running statistics trail the weights by several steps; refresh them
    // from this epoch's clips with the final weights.
    std::vector<Tensor> batches;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<const Tensor*> members;
      for (std::size_t k = start; k < end; ++k) members.push_back(&clips[k]);
      batches.push_back(make_batch(members));
    }
    m.recalibrate_norms(batches);

    EpochLog entry{epoch, lr, loss_sum / static_cast<double>(order.size()),
                   validation_auc(m, val_set)};
    result.log.push_back(entry);
    const bool better = std::isnan(entry.val_auc) ? true : entry.val_auc > result.best_auc;
    if (better) {
      result.best_epoch = epoch;
      result.best_auc = entry.val_auc;
      result.best_params = m.params();
      result.best_stats = m.norm_stats();
    }
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

std::string log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "epoch,lr,train_loss,val_auc\n";
  for (const auto& e : log) {
    os << e.epoch << "," << format_double(e.lr) << "," << format_double(e.train_loss) << ",";
    if (std::isnan(e.val_auc)) os << "nan";
    else os << format_double(e.val_auc);
    os << "\n";
  }
  return os.str();
}

}  // namespace ftcn::train
