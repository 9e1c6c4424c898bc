#include "ftcn/data/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

namespace ftcn::data {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Smooth colour texture: a base colour plus a few low-frequency plane waves.
class Texture {
 public:
  Texture(std::mt19937_64& rng, double max_freq, double max_amp) {
    for (auto& b : base_) b = uniform(rng, 0.25, 0.75);
    for (auto& w : waves_) {
      const double angle = uniform(rng, 0, kTwoPi);
      const double freq = uniform(rng, 0.03, max_freq);
      w.fx = freq * std::cos(angle);
      w.fy = freq * std::sin(angle);
      w.phase = uniform(rng, 0, kTwoPi);
      for (auto& a : w.amp) a = uniform(rng, 0.02, max_amp);
    }
  }

  double at(int channel, double x, double y) const {
    double v = base_[channel];
    for (const auto& w : waves_) {
      v += w.amp[channel] * std::sin(kTwoPi * (w.fx * x + w.fy * y) + w.phase);
    }
    return v;
  }

 private:
  struct Wave {
    double fx, fy, phase;
    std::array<double, 3> amp;
  };
  std::array<double, 3> base_{};
  std::array<Wave, 4> waves_{};
};

double ellipse_radius(const SceneParams& s, double dx, double dy) {
  const double u = dx / s.radius_x, v = dy / s.radius_y;
  return std::sqrt(u * u + v * v);
}

/// About one pixel of anti-aliasing across the ellipse edge.
double coverage(const SceneParams& s, double rho) {
  const double r = std::min(s.radius_x, s.radius_y);
  return std::clamp((1.0 - rho) * r + 0.5, 0.0, 1.0);
}

void clamp_unit(Tensor& t) {
  for (auto& v : t.data()) v = std::clamp(v, 0.0f, 1.0f);
}

std::int64_t index(const Shape& s, std::int64_t c, std::int64_t t, std::int64_t y, std::int64_t x) {
  return ((c * s[1] + t) * s[2] + y) * s[3] + x;
}

void check_clip(const Tensor& clip) {
  if (clip.rank() != 4 || clip.dim(0) != 3) {
    throw ShapeError("expected a clip [3, T, H, W], got " + ftcn::to_string(clip.shape()));
  }
}

}  // namespace

Method parse_method(std::string_view name) {
  for (Method m : all_methods()) {
    if (to_string(m) == name) return m;
  }
  throw Error("unknown method '" + std::string(name) + "' (flickerA|flickerB|blendA|blendB)");
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::flickerA: return "flickerA";
    case Method::flickerB: return "flickerB";
    case Method::blendA: return "blendA";
    case Method::blendB: return "blendB";
  }
  return "?";
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> m{Method::flickerA, Method::flickerB, Method::blendA,
                                     Method::blendB};
  return m;
}

void validate(const SceneParams& s, std::int64_t height, std::int64_t width) {
  if (s.radius_x <= 0 || s.radius_y <= 0) throw Error("foreground radii must be positive");
  if (s.amplitude_x < 0 || s.amplitude_y < 0 || s.frequency < 0 || s.max_step <= 0) {
    throw Error("motion amplitude, frequency and max_step must be non-negative");
  }
  const double left = s.center_x - s.amplitude_x - s.radius_x;
  const double right = s.center_x + s.amplitude_x + s.radius_x;
  const double top = s.center_y - s.amplitude_y - s.radius_y;
  const double bottom = s.center_y + s.amplitude_y + s.radius_y;
  if (left < -0.5 || top < -0.5 || right > static_cast<double>(width) - 0.5 ||
      bottom > static_cast<double>(height) - 0.5) {
    throw Error("foreground region leaves the " + std::to_string(height) + "x" +
                std::to_string(width) + " frame");
  }
  const double speed = kTwoPi * s.frequency * std::hypot(s.amplitude_x, s.amplitude_y);
  if (speed > s.max_step + 1e-12) {
    throw Error("foreground moves up to " + std::to_string(speed) + " px per frame, above max_step " +
                std::to_string(s.max_step));
  }
}

SceneParams random_scene(std::uint64_t seed, std::int64_t height, std::int64_t width) {
  std::mt19937_64 rng(mix(seed ^ 0x5CE7Eull));
  const double h = static_cast<double>(height), w = static_cast<double>(width);
  SceneParams s;
  s.seed = seed;
  s.radius_x = uniform(rng, w / 8, w / 5);
  s.radius_y = uniform(rng, h / 8, h / 5);
  s.frequency = uniform(rng, 0.02, 0.1);
  s.amplitude_x = uniform(rng, 0, w / 8);
  s.amplitude_y = uniform(rng, 0, h / 8);
  const double speed = kTwoPi * s.frequency * std::hypot(s.amplitude_x, s.amplitude_y);
  if (speed > s.max_step) {
    s.amplitude_x *= s.max_step / speed;
    s.amplitude_y *= s.max_step / speed;
  }
  s.phase_x = uniform(rng, 0, kTwoPi);
  s.phase_y = uniform(rng, 0, kTwoPi);
  const double mx = s.radius_x + s.amplitude_x, my = s.radius_y + s.amplitude_y;
  s.center_x = uniform(rng, mx - 0.5, w - 0.5 - mx);
  s.center_y = uniform(rng, my - 0.5, h - 0.5 - my);
  validate(s, height, width);
  return s;
}

std::pair<double, double> displacement(const SceneParams& s, std::int64_t t) {
  const double a = kTwoPi * s.frequency * static_cast<double>(t);
  return {s.amplitude_x * std::sin(a + s.phase_x), s.amplitude_y * std::sin(a + s.phase_y)};
}

Tensor foreground_mask(const SceneParams& s, std::int64_t frames, std::int64_t height,
                       std::int64_t width) {
  validate(s, height, width);
  Tensor mask({frames, height, width});
  for (std::int64_t t = 0; t < frames; ++t) {
    const auto [dx, dy] = displacement(s, t);
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t x = 0; x < width; ++x) {
        const double rho = ellipse_radius(s, static_cast<double>(x) - s.center_x - dx,
                                          static_cast<double>(y) - s.center_y - dy);
        mask[(t * height + y) * width + x] = static_cast<float>(coverage(s, rho));
      }
    }
  }
  return mask;
}

Clip gen_real(const SceneParams& s, std::int64_t frames, std::int64_t height, std::int64_t width) {
  if (frames < 1) throw Error("a clip needs at least one frame");
  validate(s, height, width);
  std::mt19937_64 rng(mix(s.seed));
  const Texture background(rng, 0.12, 0.07), foreground(rng, 0.12, 0.07);
  Clip clip;
  clip.seed = s.seed;
  clip.pixels = Tensor({3, frames, height, width});
  const Shape& shape = clip.pixels.shape();
  for (std::int64_t t = 0; t < frames; ++t) {
    const auto [dx, dy] = displacement(s, t);
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t x = 0; x < width; ++x) {
        const double fx = static_cast<double>(x) - s.center_x - dx;
        const double fy = static_cast<double>(y) - s.center_y - dy;
        const double alpha = coverage(s, ellipse_radius(s, fx, fy));
        for (int c = 0; c < 3; ++c) {
          const double bg = background.at(c, static_cast<double>(x), static_cast<double>(y));
          double v = bg;
          if (alpha > 0) v = bg + alpha * (foreground.at(c, fx, fy) - bg);
          clip.pixels[index(shape, c, t, y, x)] = static_cast<float>(v);
        }
      }
    }
  }
  clamp_unit(clip.pixels);
  return clip;
}

Clip gen_fake(const SceneParams& s, Method method, double strength, std::int64_t frames,
              std::int64_t height, std::int64_t width) {
  if (!(strength > 0)) throw Error("artifact strength must be positive");
  Clip clip = gen_real(s, frames, height, width);
  clip.label = 1;
  clip.method = std::string(to_string(method));
  std::mt19937_64 rng(mix(s.seed ^ (0xFA4Eull + static_cast<std::uint64_t>(method))));
  const Tensor mask = foreground_mask(s, frames, height, width);
  const Shape& shape = clip.pixels.shape();
  auto& px = clip.pixels;

  std::vector<double> jitter(static_cast<std::size_t>(frames));
  for (auto& j : jitter) j = uniform(rng, -strength / 4, strength / 4);

  // Method-specific draws happen before the pixel loop so the stream layout
  // does not depend on the frame size.
  std::array<double, 3> ring_color{};
  for (auto& c : ring_color) c = (rng() & 1 ? 1.0 : -1.0) * uniform(rng, 0.5, 1.0);
  std::vector<double> envelope(static_cast<std::size_t>(frames), 0.0);
  double mark_u = 0, mark_v = 0, mark_sign = 1;
  if (method == Method::flickerB) {
    mark_u = uniform(rng, -0.4, 0.4);
    mark_v = uniform(rng, -0.4, 0.4);
    mark_sign = rng() & 1 ? 1.0 : -1.0;
    std::int64_t onset = static_cast<std::int64_t>(rng() % 6);
    while (onset < frames) {
      const std::int64_t life = 4 + static_cast<std::int64_t>(rng() % 3);
      for (std::int64_t k = 0; k < life && onset + k < frames; ++k) {
        envelope[static_cast<std::size_t>(onset + k)] =
            1.0 - static_cast<double>(k) / static_cast<double>(life);
      }
      onset += life;
    }
  }

  for (std::int64_t t = 0; t < frames; ++t) {
    const auto [dx, dy] = displacement(s, t);
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t x = 0; x < width; ++x) {
        const double alpha = mask[(t * height + y) * width + x];
        if (alpha <= 0) continue;
        const double fx = static_cast<double>(x) - s.center_x - dx;
        const double fy = static_cast<double>(y) - s.center_y - dy;
        std::array<double, 3> delta{};
        switch (method) {
          case Method::flickerA:
            for (auto& d : delta) d = strength * uniform(rng, -1, 1);
            break;
          case Method::flickerB: {
            const double mu = (fx / s.radius_x - mark_u) / 0.6;
            const double mv = (fy / s.radius_y - mark_v) / 0.6;
            const double blob = std::exp(-0.5 * (mu * mu + mv * mv));
            for (auto& d : delta) {
              d = mark_sign * 2.0 * strength * blob * envelope[static_cast<std::size_t>(t)];
            }
            break;
          }
          case Method::blendA:
          case Method::blendB:
            break;
        }
        for (int c = 0; c < 3; ++c) {
          auto& v = px[index(shape, c, t, y, x)];
          v = static_cast<float>(v + alpha * (delta[c] + jitter[static_cast<std::size_t>(t)]));
        }
      }
    }
  }
  if (method == Method::blendA || method == Method::blendB) {
    // Blend artifacts sit at the region's rest position and never move.
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t x = 0; x < width; ++x) {
        const double fx = static_cast<double>(x) - s.center_x;
        const double fy = static_cast<double>(y) - s.center_y;
        const double rho = ellipse_radius(s, fx, fy);
        std::array<double, 3> delta{};
        if (method == Method::blendA) {
          const double band = std::max(0.0, 1.0 - std::abs(rho - 0.85) / 0.15);
          for (int c = 0; c < 3; ++c) delta[c] = strength * band * ring_color[c];
        } else {
          const double sign = ((x / 2 + y / 2) % 2 == 0) ? 1.0 : -1.0;
          const double inside = coverage(s, rho);
          for (auto& d : delta) d = 0.5 * strength * sign * inside;
        }
        for (int c = 0; c < 3; ++c) {
          for (std::int64_t t = 0; t < frames; ++t) {
            auto& v = px[index(shape, c, t, y, x)];
            v = static_cast<float>(v + delta[c]);
          }
        }
      }
    }
  }
  clamp_unit(px);
  return clip;
}

Perturbation parse_perturbation(std::string_view name) {
  for (Perturbation p : all_perturbations()) {
    if (to_string(p) == name) return p;
  }
  throw Error("unknown perturbation '" + std::string(name) + "' (block|saturation|blur|resize)");
}

std::string_view to_string(Perturbation p) {
  switch (p) {
    case Perturbation::block: return "block";
    case Perturbation::saturation: return "saturation";
    case Perturbation::blur: return "blur";
    case Perturbation::resize: return "resize";
  }
  return "?";
}

const std::vector<Perturbation>& all_perturbations() {
  static const std::vector<Perturbation> p{Perturbation::block, Perturbation::saturation,
                                           Perturbation::blur, Perturbation::resize};
  return p;
}

std::vector<double> gaussian_taps(double sigma) {
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double total = 0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    taps[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (auto& v : taps) v /= total;
  return taps;
}

namespace {

using Plane = std::vector<double>;

Plane blur_plane(const Plane& in, std::int64_t h, std::int64_t w, const std::vector<double>& taps) {
  const auto radius = static_cast<std::int64_t>(taps.size() / 2);
  Plane tmp(in.size()), out(in.size());
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      double acc = 0;
      for (std::int64_t k = -radius; k <= radius; ++k) {
        const std::int64_t xx = std::clamp<std::int64_t>(x + k, 0, w - 1);
        acc += taps[static_cast<std::size_t>(k + radius)] * in[static_cast<std::size_t>(y * w + xx)];
      }
      tmp[static_cast<std::size_t>(y * w + x)] = acc;
    }
  }
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      double acc = 0;
      for (std::int64_t k = -radius; k <= radius; ++k) {
        const std::int64_t yy = std::clamp<std::int64_t>(y + k, 0, h - 1);
        acc += taps[static_cast<std::size_t>(k + radius)] * tmp[static_cast<std::size_t>(yy * w + x)];
      }
      out[static_cast<std::size_t>(y * w + x)] = acc;
    }
  }
  return out;
}

/// Half-pixel-centre bilinear resampling; lerps as a + w (b - a) so constant
/// planes stay exactly constant.
Plane resample(const Plane& in, std::int64_t h, std::int64_t w, std::int64_t oh, std::int64_t ow) {
  Plane out(static_cast<std::size_t>(oh * ow));
  auto coord = [](std::int64_t o, std::int64_t in_n, std::int64_t out_n) {
    const double src = (static_cast<double>(o) + 0.5) * static_cast<double>(in_n) /
                           static_cast<double>(out_n) -
                       0.5;
    return std::clamp(src, 0.0, static_cast<double>(in_n - 1));
  };
  for (std::int64_t y = 0; y < oh; ++y) {
    const double sy = coord(y, h, oh);
    const auto y0 = static_cast<std::int64_t>(std::floor(sy));
    const std::int64_t y1 = std::min(y0 + 1, h - 1);
    const double wy = sy - static_cast<double>(y0);
    for (std::int64_t x = 0; x < ow; ++x) {
      const double sx = coord(x, w, ow);
      const auto x0 = static_cast<std::int64_t>(std::floor(sx));
      const std::int64_t x1 = std::min(x0 + 1, w - 1);
      const double wx = sx - static_cast<double>(x0);
      auto at = [&](std::int64_t yy, std::int64_t xx) { return in[static_cast<std::size_t>(yy * w + xx)]; };
      const double top = at(y0, x0) + wx * (at(y0, x1) - at(y0, x0));
      const double bottom = at(y1, x0) + wx * (at(y1, x1) - at(y1, x0));
      out[static_cast<std::size_t>(y * ow + x)] = top + wy * (bottom - top);
    }
  }
  return out;
}

template <typename Fn>
void for_each_plane(Tensor& clip, Fn&& fn) {
  const std::int64_t h = clip.dim(2), w = clip.dim(3), n = h * w;
  const std::int64_t planes = clip.size() / n;
  for (std::int64_t p = 0; p < planes; ++p) {
    Plane plane(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) plane[static_cast<std::size_t>(i)] = clip[p * n + i];
    plane = fn(plane);
    for (std::int64_t i = 0; i < n; ++i) {
      clip[p * n + i] = static_cast<float>(plane[static_cast<std::size_t>(i)]);
    }
  }
}

}  // namespace

Tensor perturb(const Tensor& clip, Perturbation kind, int level, std::uint64_t seed) {
  check_clip(clip);
  if (level < 0 || level > 5) {
    throw Error("perturbation level " + std::to_string(level) + " outside 1..5");
  }
  if (level == 0) return clip;
  Tensor out = clip;
  const std::int64_t frames = clip.dim(1), h = clip.dim(2), w = clip.dim(3);
  const auto li = static_cast<std::size_t>(level - 1);
  switch (kind) {
    case Perturbation::block: {
      static constexpr std::array<int, 5> counts{2, 4, 8, 16, 32};
      std::mt19937_64 rng(mix(seed ^ 0xB10Cull));
      const std::int64_t bh = std::min<std::int64_t>(8, h), bw = std::min<std::int64_t>(8, w);
      for (int k = 0; k < counts[li]; ++k) {
        const auto y0 = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(h - bh + 1));
        const auto x0 = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(w - bw + 1));
        for (std::int64_t c = 0; c < 3; ++c) {
          for (std::int64_t t = 0; t < frames; ++t) {
            for (std::int64_t y = y0; y < y0 + bh; ++y) {
              for (std::int64_t x = x0; x < x0 + bw; ++x) out[index(out.shape(), c, t, y, x)] = 0;
            }
          }
        }
      }
      break;
    }
    case Perturbation::saturation: {
      static constexpr std::array<double, 5> factors{0.8, 0.6, 0.4, 0.2, 0.0};
      const double f = factors[li];
      const std::int64_t n = frames * h * w;
      for (std::int64_t i = 0; i < n; ++i) {
        const double r = clip[i], g = clip[n + i], b = clip[2 * n + i];
        // BT.601 full-range luma/chroma.
        const double luma = 0.299 * r + 0.587 * g + 0.114 * b;
        const double cb = f * (-0.168736 * r - 0.331264 * g + 0.5 * b);
        const double cr = f * (0.5 * r - 0.418688 * g - 0.081312 * b);
        out[i] = static_cast<float>(luma + 1.402 * cr);
        out[n + i] = static_cast<float>(luma - 0.344136 * cb - 0.714136 * cr);
        out[2 * n + i] = static_cast<float>(luma + 1.772 * cb);
      }
      break;
    }
    case Perturbation::blur: {
      const auto taps = gaussian_taps(static_cast<double>(level));
      for_each_plane(out, [&](const Plane& p) { return blur_plane(p, h, w, taps); });
      break;
    }
    case Perturbation::resize: {
      static constexpr std::array<double, 5> factors{1 / 1.5, 1 / 2.0, 1 / 3.0, 1 / 4.0, 1 / 6.0};
      const auto dh = std::max<std::int64_t>(1, std::llround(static_cast<double>(h) * factors[li]));
      const auto dw = std::max<std::int64_t>(1, std::llround(static_cast<double>(w) * factors[li]));
      for_each_plane(out, [&](const Plane& p) {
        return resample(resample(p, h, w, dh, dw), dh, dw, h, w);
      });
      break;
    }
  }
  clamp_unit(out);
  return out;
}

double flicker_statistic(const Tensor& clip, double threshold) {
  check_clip(clip);
  const std::int64_t frames = clip.dim(1), n = clip.dim(2) * clip.dim(3);
  if (frames < 2) return 0;
  std::vector<double> steps(static_cast<std::size_t>(frames - 1));
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t t = 0; t + 1 < frames; ++t) {
      double m = 0;
      for (std::int64_t c = 0; c < 3; ++c) {
        const std::int64_t a = (c * frames + t) * n + i;
        m = std::max(m, static_cast<double>(std::abs(clip[a + n] - clip[a])));
      }
      steps[static_cast<std::size_t>(t)] = m;
    }
    const auto mid = steps.begin() + static_cast<std::ptrdiff_t>(steps.size() / 2);
    std::nth_element(steps.begin(), mid, steps.end());
    if (*mid > threshold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

double temporal_variation(const Tensor& clip) {
  check_clip(clip);
  const std::int64_t frames = clip.dim(1), n = clip.dim(2) * clip.dim(3);
  if (frames < 2) return 0;
  double total = 0;
  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t t = 0; t + 1 < frames; ++t) {
      const std::int64_t a = (c * frames + t) * n, b = a + n;
      for (std::int64_t i = 0; i < n; ++i) total += std::abs(clip[b + i] - clip[a + i]);
    }
  }
  return total / static_cast<double>(3 * (frames - 1) * n);
}

}  // namespace ftcn::data
