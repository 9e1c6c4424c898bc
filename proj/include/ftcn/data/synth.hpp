#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ftcn/tensor/tensor.hpp"

namespace ftcn::data {

enum class Method { flickerA, flickerB, blendA, blendB };

Method parse_method(std::string_view name);
std::string_view to_string(Method m);
const std::vector<Method>& all_methods();

/// A textured elliptical foreground moving over a static textured background.
/// Coordinates are in pixels, with (0, 0) the centre of the top-left pixel.
struct SceneParams {
  std::uint64_t seed = 0;
  double center_x = 0, center_y = 0;
  double radius_x = 1, radius_y = 1;
  double amplitude_x = 0, amplitude_y = 0;
  /// Oscillation frequency in cycles per frame.
  double frequency = 0;
  double phase_x = 0, phase_y = 0;
  /// Upper bound on the per-frame displacement of the foreground, in pixels.
  double max_step = 1.5;
};

/// Rejects scenes whose foreground can leave the frame or whose trajectory
/// moves faster than max_step.
void validate(const SceneParams& scene, std::int64_t height, std::int64_t width);

/// A valid scene drawn from `seed`: radius H/8..H/5, motion up to H/8.
SceneParams random_scene(std::uint64_t seed, std::int64_t height, std::int64_t width);

/// Foreground displacement (dx, dy) at frame t.
std::pair<double, double> displacement(const SceneParams& scene, std::int64_t t);

/// Soft foreground coverage per frame, [T, H, W] in [0, 1].
Tensor foreground_mask(const SceneParams& scene, std::int64_t frames, std::int64_t height,
                       std::int64_t width);

struct Clip {
  Tensor pixels;  // [3, T, H, W]
  int label = 0;  // 1 = fake
  std::string method = "real";
  std::string video_id;
  std::uint64_t seed = 0;
};

Clip gen_real(const SceneParams& scene, std::int64_t frames, std::int64_t height,
              std::int64_t width);

/// gen_real plus an artifact confined to the foreground. Every method also
/// adds a per-frame brightness jitter of amplitude strength/4 to the region.
Clip gen_fake(const SceneParams& scene, Method method, double strength, std::int64_t frames,
              std::int64_t height, std::int64_t width);

enum class Perturbation { block, saturation, blur, resize };

Perturbation parse_perturbation(std::string_view name);
std::string_view to_string(Perturbation p);
const std::vector<Perturbation>& all_perturbations();

/// Level ladder (level 0 passes the clip through unchanged):
///   block       k random 8x8 blocks zeroed per frame, k = 2, 4, 8, 16, 32
///   saturation  chroma scaled by 0.8, 0.6, 0.4, 0.2, 0.0
///   blur        Gaussian sigma 1..5 per frame, replicate borders
///   resize      bilinear down by 1/1.5, 1/2, 1/3, 1/4, 1/6 and back up
/// Block positions come from `seed` and are shared by every frame.
Tensor perturb(const Tensor& clip, Perturbation kind, int level, std::uint64_t seed = 0);

/// Version tag of the generators and the perturbation ladder.
inline constexpr std::string_view kGeneratorVersion = "synthclips-1";

/// Mean absolute frame-to-frame difference over every pixel and channel.
double temporal_variation(const Tensor& clip);

/// Fraction of pixels whose median frame-to-frame change (largest channel)
/// exceeds `threshold`. Sporadic changes such as a passing edge do not count;
/// a change present in most frames does.
double flicker_statistic(const Tensor& clip, double threshold);

/// Normalized discrete Gaussian taps for `sigma`, radius ceil(3 sigma).
std::vector<double> gaussian_taps(double sigma);

}  // namespace ftcn::data
