#include "ftcn/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ftcn/tensor/kernels.hpp"

namespace ftcn {

double gelu_value(double x) { return 0.5 * x * std::erfc(-x / std::numbers::sqrt2); }

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace nn {

namespace {

template <typename T>
using TensorT = BasicTensor<T>;

std::int64_t leading(const Shape& s) { return numel(s) / s.back(); }

struct VideoDims {
  std::int64_t n, c, t, h, w;
  bool batched;
};

VideoDims video_dims(const Shape& s, const char* op) {
  if (s.size() == 5) return {s[0], s[1], s[2], s[3], s[4], true};
  if (s.size() == 4) return {1, s[0], s[1], s[2], s[3], false};
  throw ShapeError(std::string(op) + ": expected C x T x H x W or N x C x T x H x W input, got " +
                   to_string(s));
}

Shape video_shape(const VideoDims& d, std::int64_t c, std::int64_t t, std::int64_t h,
                  std::int64_t w) {
  if (d.batched) return {d.n, c, t, h, w};
  return {c, t, h, w};
}

template <typename T>
T sigmoid_of(T x) {
  return static_cast<T>(sigmoid_value(static_cast<double>(x)));
}

}  // namespace

template <typename T>
Var conv3d(Tape<T>& tape, Var x, Var weights, std::optional<Var> bias, Dims3 stride,
           Dims3 padding) {
  const TensorT<T>& xv = tape.value(x);
  const TensorT<T>& wv = tape.value(weights);
  const VideoDims d = video_dims(xv.shape(), "conv3d");
  if (wv.rank() != 5) {
    throw ShapeError("conv3d: weights must be Cout x Cin x Kt x Kh x Kw, got " +
                     to_string(wv.shape()));
  }
  if (wv.dim(1) != d.c) {
    throw ShapeError("conv3d: input " + to_string(xv.shape()) + " has " + std::to_string(d.c) +
                     " channels but weights " + to_string(wv.shape()) + " expect " +
                     std::to_string(wv.dim(1)));
  }
  const std::int64_t cout = wv.dim(0);
  if (bias && (tape.value(*bias).rank() != 1 || tape.value(*bias).dim(0) != cout)) {
    throw ShapeError("conv3d: bias " + to_string(tape.value(*bias).shape()) +
                     " does not match " + std::to_string(cout) + " output channels");
  }
  const Dims3 kernel{static_cast<int>(wv.dim(2)), static_cast<int>(wv.dim(3)),
                     static_cast<int>(wv.dim(4))};
  const WindowGeometry g = make_geometry(d.n, d.c, cout, d.t, d.h, d.w, kernel, stride, padding);

  TensorT<T> out(video_shape(d, cout, g.to, g.ho, g.wo));
  std::span<const T> bspan;
  if (bias) bspan = tape.value(*bias).data();
  kernels::conv3d_forward<T>(g, xv.data(), wv.data(), bspan, out.data());

  auto fn = [x, weights, bias, g](Tape<T>& tp, const TensorT<T>& gy) {
    if (tp.requires_grad(x)) {
      TensorT<T> gx(tp.value(x).shape());
      kernels::conv3d_backward_input<T>(g, tp.value(weights).data(), gy.data(), gx.data());
      tp.accumulate(x, std::move(gx));
    }
    if (tp.requires_grad(weights)) {
      TensorT<T> gw(tp.value(weights).shape());
      kernels::conv3d_backward_weight<T>(g, tp.value(x).data(), gy.data(), gw.data());
      tp.accumulate(weights, std::move(gw));
    }
    if (bias && tp.requires_grad(*bias)) {
      TensorT<T> gb({g.out_channels});
      const std::int64_t plane = g.out_plane();
      for (std::int64_t n = 0; n < g.batch; ++n) {
        for (std::int64_t c = 0; c < g.out_channels; ++c) {
          const T* p = gy.data().data() + (n * g.out_channels + c) * plane;
          T acc{0};
          for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
          gb[c] += acc;
        }
      }
      tp.accumulate(*bias, std::move(gb));
    }
  };
  if (bias) return tape.record(std::move(out), {x, weights, *bias}, fn);
  return tape.record(std::move(out), {x, weights}, fn);
}

template <typename T>
Var maxpool3d(Tape<T>& tape, Var x, Dims3 kernel, Dims3 stride, Dims3 padding) {
  const TensorT<T>& xv = tape.value(x);
  const VideoDims d = video_dims(xv.shape(), "maxpool3d");
  const WindowGeometry g = make_geometry(d.n, d.c, d.c, d.t, d.h, d.w, kernel, stride, padding);
  TensorT<T> out(video_shape(d, d.c, g.to, g.ho, g.wo));
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(out.size()));
  kernels::maxpool3d_forward<T>(g, xv.data(), out.data(), argmax);
  return tape.record(std::move(out), {x},
                     [x, g, argmax = std::move(argmax)](Tape<T>& tp, const TensorT<T>& gy) {
                       TensorT<T> gx(tp.value(x).shape());
                       kernels::maxpool3d_backward<T>(g, argmax, gy.data(), gx.data());
                       tp.accumulate(x, std::move(gx));
                     });
}

template <typename T>
Var batch_norm(Tape<T>& tape, Var x, Var gain, Var shift, Mode mode, RunningStats<T>* stats,
               double eps, double momentum) {
  const TensorT<T>& xv = tape.value(x);
  if (xv.rank() < 2) {
    throw ShapeError("batch_norm: input needs a channel axis, got " + to_string(xv.shape()));
  }
  const std::int64_t n = xv.dim(0);
  const std::int64_t c = xv.dim(1);
  const std::int64_t inner = xv.size() / (n * c);
  const std::int64_t count = n * inner;
  if (count < 1) throw ShapeError("batch_norm: zero-element normalization axis");
  const TensorT<T>& gv = tape.value(gain);
  const TensorT<T>& sv = tape.value(shift);
  if (gv.shape() != Shape{c} || sv.shape() != Shape{c}) {
    throw ShapeError("batch_norm: gain " + to_string(gv.shape()) + " / shift " +
                     to_string(sv.shape()) + " must both be [" + std::to_string(c) + "]");
  }
  if (mode == Mode::eval && stats == nullptr) {
    throw Error("batch_norm: eval mode requires running statistics");
  }
  if (stats && (stats->mean.shape() != Shape{c} || stats->var.shape() != Shape{c})) {
    throw ShapeError("batch_norm: running statistics do not match " + std::to_string(c) +
                     " channels");
  }

  std::vector<T> mu(static_cast<std::size_t>(c)), inv_std(static_cast<std::size_t>(c));
  auto xs = xv.data();
  if (mode == Mode::train) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double s = 0;
      for (std::int64_t b = 0; b < n; ++b) {
        const T* p = xs.data() + (b * c + ch) * inner;
        for (std::int64_t i = 0; i < inner; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double ss = 0;
      for (std::int64_t b = 0; b < n; ++b) {
        const T* p = xs.data() + (b * c + ch) * inner;
        for (std::int64_t i = 0; i < inner; ++i) ss += (p[i] - m) * (p[i] - m);
      }
      const double var = ss / static_cast<double>(count);
      mu[ch] = static_cast<T>(m);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + eps));
      if (stats) {
        const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : var;
        stats->mean[ch] = static_cast<T>((1 - momentum) * stats->mean[ch] + momentum * m);
        stats->var[ch] = static_cast<T>((1 - momentum) * stats->var[ch] + momentum * unbiased);
      }
    }
  } else {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      mu[ch] = stats->mean[ch];
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(stats->var[ch]) + eps));
    }
  }

  TensorT<T> xhat(xv.shape());
  TensorT<T> out(xv.shape());
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const std::int64_t base = (b * c + ch) * inner;
      for (std::int64_t i = 0; i < inner; ++i) {
        const T h = (xs[base + i] - mu[ch]) * inv_std[ch];
        xhat[base + i] = h;
        out[base + i] = gv[ch] * h + sv[ch];
      }
    }
  }

  const bool batch_stats = mode == Mode::train;
  return tape.record(
      std::move(out), {x, gain, shift},
      [x, gain, shift, n, c, inner, count, batch_stats, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Tape<T>& tp, const TensorT<T>& gy) {
        const TensorT<T>& gv = tp.value(gain);
        TensorT<T> ggain({c}), gshift({c});
        std::vector<double> sum_dy(static_cast<std::size_t>(c), 0.0),
            sum_dy_xhat(static_cast<std::size_t>(c), 0.0);
        for (std::int64_t b = 0; b < n; ++b) {
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const std::int64_t base = (b * c + ch) * inner;
            for (std::int64_t i = 0; i < inner; ++i) {
              sum_dy[ch] += gy[base + i];
              sum_dy_xhat[ch] += gy[base + i] * xhat[base + i];
            }
          }
        }
        for (std::int64_t ch = 0; ch < c; ++ch) {
          gshift[ch] = static_cast<T>(sum_dy[ch]);
          ggain[ch] = static_cast<T>(sum_dy_xhat[ch]);
        }
        if (tp.requires_grad(x)) {
          TensorT<T> gx(tp.value(x).shape());
          for (std::int64_t b = 0; b < n; ++b) {
            for (std::int64_t ch = 0; ch < c; ++ch) {
              const std::int64_t base = (b * c + ch) * inner;
              const T k = gv[ch] * inv_std[ch];
              if (batch_stats) {
                const T mean_dy = static_cast<T>(sum_dy[ch] / static_cast<double>(count));
                const T mean_dy_xhat =
                    static_cast<T>(sum_dy_xhat[ch] / static_cast<double>(count));
                for (std::int64_t i = 0; i < inner; ++i) {
                  gx[base + i] = k * (gy[base + i] - mean_dy - xhat[base + i] * mean_dy_xhat);
                }
              } else {
                for (std::int64_t i = 0; i < inner; ++i) gx[base + i] = k * gy[base + i];
              }
            }
          }
          tp.accumulate(x, std::move(gx));
        }
        tp.accumulate(gain, std::move(ggain));
        tp.accumulate(shift, std::move(gshift));
      });
}

template <typename T>
Var layer_norm(Tape<T>& tape, Var x, Var gain, Var shift, double eps) {
  const TensorT<T>& xv = tape.value(x);
  const std::int64_t d = xv.shape().back();
  const std::int64_t rows = leading(xv.shape());
  if (d < 1) throw ShapeError("layer_norm: zero-element normalization axis");
  const TensorT<T>& gv = tape.value(gain);
  const TensorT<T>& sv = tape.value(shift);
  if (gv.shape() != Shape{d} || sv.shape() != Shape{d}) {
    throw ShapeError("layer_norm: gain " + to_string(gv.shape()) + " / shift " +
                     to_string(sv.shape()) + " must both be [" + std::to_string(d) + "]");
  }
  TensorT<T> xhat(xv.shape()), out(xv.shape());
  std::vector<T> inv_std(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* p = xv.data().data() + r * d;
    double s = 0;
    for (std::int64_t i = 0; i < d; ++i) s += p[i];
    const double m = s / static_cast<double>(d);
    double ss = 0;
    for (std::int64_t i = 0; i < d; ++i) ss += (p[i] - m) * (p[i] - m);
    const double is = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
    inv_std[r] = static_cast<T>(is);
    for (std::int64_t i = 0; i < d; ++i) {
      const T h = static_cast<T>((p[i] - m) * is);
      xhat[r * d + i] = h;
      out[r * d + i] = gv[i] * h + sv[i];
    }
  }
  return tape.record(
      std::move(out), {x, gain, shift},
      [x, gain, shift, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape<T>& tp, const TensorT<T>& gy) {
        const TensorT<T>& gv = tp.value(gain);
        TensorT<T> ggain({d}), gshift({d});
        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t i = 0; i < d; ++i) {
            gshift[i] += gy[r * d + i];
            ggain[i] += gy[r * d + i] * xhat[r * d + i];
          }
        }
        if (tp.requires_grad(x)) {
          TensorT<T> gx(tp.value(x).shape());
          for (std::int64_t r = 0; r < rows; ++r) {
            double sum_g = 0, sum_gx = 0;
            for (std::int64_t i = 0; i < d; ++i) {
              const double gh = gy[r * d + i] * gv[i];
              sum_g += gh;
              sum_gx += gh * xhat[r * d + i];
            }
            const double mg = sum_g / static_cast<double>(d);
            const double mgx = sum_gx / static_cast<double>(d);
            for (std::int64_t i = 0; i < d; ++i) {
              const double gh = gy[r * d + i] * gv[i];
              gx[r * d + i] = static_cast<T>(inv_std[r] * (gh - mg - xhat[r * d + i] * mgx));
            }
          }
          tp.accumulate(x, std::move(gx));
        }
        tp.accumulate(gain, std::move(ggain));
        tp.accumulate(shift, std::move(gshift));
      });
}

template <typename T>
Var normalize(Tape<T>& tape, Var x, NormKind kind, Var gain, Var shift, Mode mode,
              RunningStats<T>* stats, double eps) {
  if (kind == NormKind::layer_last_axis) return layer_norm(tape, x, gain, shift, eps);
  return batch_norm(tape, x, gain, shift, mode, stats, eps);
}

template <typename T>
Var activation(Tape<T>& tape, Var x, Activation kind) {
  const TensorT<T>& xv = tape.value(x);
  TensorT<T> out(xv.shape());
  const std::int64_t n = xv.size();
  switch (kind) {
    case Activation::relu:
      for (std::int64_t i = 0; i < n; ++i) out[i] = xv[i] > T{0} ? xv[i] : T{0};
      break;
    case Activation::gelu:
      for (std::int64_t i = 0; i < n; ++i) out[i] = static_cast<T>(gelu_value(xv[i]));
      break;
    case Activation::sigmoid:
      for (std::int64_t i = 0; i < n; ++i) out[i] = sigmoid_of(xv[i]);
      break;
  }
  return tape.record(std::move(out), {x}, [x, kind, n](Tape<T>& tp, const TensorT<T>& gy) {
    const TensorT<T>& xv = tp.value(x);
    TensorT<T> gx(xv.shape());
    switch (kind) {
      case Activation::relu:
        for (std::int64_t i = 0; i < n; ++i) gx[i] = xv[i] > T{0} ? gy[i] : T{0};
        break;
      case Activation::gelu:
        for (std::int64_t i = 0; i < n; ++i) {
          const double v = xv[i];
          const double cdf = 0.5 * std::erfc(-v / std::numbers::sqrt2);
          const double pdf = std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
          gx[i] = static_cast<T>(gy[i] * (cdf + v * pdf));
        }
        break;
      case Activation::sigmoid:
        for (std::int64_t i = 0; i < n; ++i) {
          const T s = sigmoid_of(xv[i]);
          gx[i] = gy[i] * s * (T{1} - s);
        }
        break;
    }
    tp.accumulate(x, std::move(gx));
  });
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var weights, std::optional<Var> bias) {
  const TensorT<T>& xv = tape.value(x);
  const TensorT<T>& wv = tape.value(weights);
  if (wv.rank() != 2 || xv.shape().back() != wv.dim(1)) {
    throw ShapeError("linear: input " + to_string(xv.shape()) + " does not match weights " +
                     to_string(wv.shape()));
  }
  const MatmulDims d{leading(xv.shape()), wv.dim(1), wv.dim(0)};
  if (bias && tape.value(*bias).shape() != Shape{d.out}) {
    throw ShapeError("linear: bias " + to_string(tape.value(*bias).shape()) +
                     " does not match weights " + to_string(wv.shape()));
  }
  Shape os = xv.shape();
  os.back() = d.out;
  TensorT<T> out(os);
  std::span<const T> bspan;
  if (bias) bspan = tape.value(*bias).data();
  kernels::linear_forward<T>(d, xv.data(), wv.data(), bspan, out.data());
  auto fn = [x, weights, bias, d](Tape<T>& tp, const TensorT<T>& gy) {
    if (tp.requires_grad(x)) {
      TensorT<T> gx(tp.value(x).shape());
      kernels::linear_backward_input<T>(d, tp.value(weights).data(), gy.data(), gx.data());
      tp.accumulate(x, std::move(gx));
    }
    if (tp.requires_grad(weights)) {
      TensorT<T> gw(tp.value(weights).shape());
      kernels::linear_backward_weight<T>(d, tp.value(x).data(), gy.data(), gw.data());
      tp.accumulate(weights, std::move(gw));
    }
    if (bias && tp.requires_grad(*bias)) {
      TensorT<T> gb({d.out});
      for (std::int64_t r = 0; r < d.rows; ++r) {
        for (std::int64_t o = 0; o < d.out; ++o) gb[o] += gy[r * d.out + o];
      }
      tp.accumulate(*bias, std::move(gb));
    }
  };
  if (bias) return tape.record(std::move(out), {x, weights, *bias}, fn);
  return tape.record(std::move(out), {x, weights}, fn);
}

namespace {

struct AxisSplit {
  std::int64_t outer, n, inner;
};

AxisSplit split_axis(const Shape& s, int axis) {
  const int rank = static_cast<int>(s.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(s));
  }
  AxisSplit a{1, s[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) a.outer *= s[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) a.inner *= s[static_cast<std::size_t>(i)];
  return a;
}

template <typename T>
void softmax_rows(const T* x, T* y, std::int64_t n, std::int64_t stride) {
  T mx = x[0];
  for (std::int64_t i = 1; i < n; ++i) mx = std::max(mx, x[i * stride]);
  double total = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double e = std::exp(static_cast<double>(x[i * stride] - mx));
    y[i * stride] = static_cast<T>(e);
    total += e;
  }
  for (std::int64_t i = 0; i < n; ++i) y[i * stride] = static_cast<T>(y[i * stride] / total);
}

}  // namespace

template <typename T>
Var softmax(Tape<T>& tape, Var x, int axis) {
  const TensorT<T>& xv = tape.value(x);
  const AxisSplit a = split_axis(xv.shape(), axis);
  TensorT<T> out(xv.shape());
  for (std::int64_t o = 0; o < a.outer; ++o) {
    for (std::int64_t in = 0; in < a.inner; ++in) {
      const std::int64_t base = o * a.n * a.inner + in;
      softmax_rows(xv.data().data() + base, out.data().data() + base, a.n, a.inner);
    }
  }
  TensorT<T> saved = out;
  return tape.record(std::move(out), {x},
                     [x, a, y = std::move(saved)](Tape<T>& tp, const TensorT<T>& gy) {
                       TensorT<T> gx(y.shape());
                       for (std::int64_t o = 0; o < a.outer; ++o) {
                         for (std::int64_t in = 0; in < a.inner; ++in) {
                           const std::int64_t base = o * a.n * a.inner + in;
                           double dotp = 0;
                           for (std::int64_t i = 0; i < a.n; ++i) {
                             dotp += gy[base + i * a.inner] * y[base + i * a.inner];
                           }
                           for (std::int64_t i = 0; i < a.n; ++i) {
                             const std::int64_t k = base + i * a.inner;
                             gx[k] = static_cast<T>(y[k] * (gy[k] - dotp));
                           }
                         }
                       }
                       tp.accumulate(x, std::move(gx));
                     });
}

template <typename T>
Var attention(Tape<T>& tape, Var q, Var k, Var v, int heads, int head_dim) {
  if (heads < 1 || head_dim < 1) {
    throw ShapeError("attention: heads and head_dim must be positive, got " +
                     std::to_string(heads) + " and " + std::to_string(head_dim));
  }
  const TensorT<T>& qv = tape.value(q);
  const TensorT<T>& kv = tape.value(k);
  const TensorT<T>& vv = tape.value(v);
  const std::int64_t inner = static_cast<std::int64_t>(heads) * head_dim;
  if (qv.rank() < 2 || qv.shape().back() != inner || qv.shape() != kv.shape() ||
      qv.shape() != vv.shape()) {
    throw ShapeError("attention: q " + to_string(qv.shape()) + ", k " + to_string(kv.shape()) +
                     ", v " + to_string(vv.shape()) + " must share shape [..., S, " +
                     std::to_string(inner) + "]");
  }
  const std::int64_t s = qv.shape()[qv.rank() - 2];
  const std::int64_t batch = qv.size() / (s * inner);
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));

  // probs: [batch, heads, S, S]
  std::vector<T> probs(static_cast<std::size_t>(batch * heads * s * s));
  TensorT<T> out(qv.shape());
  std::vector<T> scores(static_cast<std::size_t>(s));
  for (std::int64_t b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      for (std::int64_t i = 0; i < s; ++i) {
        const T* qi = qv.data().data() + (b * s + i) * inner + h * head_dim;
        for (std::int64_t j = 0; j < s; ++j) {
          const T* kj = kv.data().data() + (b * s + j) * inner + h * head_dim;
          T acc{0};
          for (int e = 0; e < head_dim; ++e) acc += qi[e] * kj[e];
          scores[j] = acc * scale;
        }
        T* p = probs.data() + ((b * heads + h) * s + i) * s;
        softmax_rows(scores.data(), p, s, 1);
        T* oi = out.data().data() + (b * s + i) * inner + h * head_dim;
        for (std::int64_t j = 0; j < s; ++j) {
          const T* vj = vv.data().data() + (b * s + j) * inner + h * head_dim;
          for (int e = 0; e < head_dim; ++e) oi[e] += p[j] * vj[e];
        }
      }
    }
  }
  return tape.record(
      std::move(out), {q, k, v},
      [q, k, v, heads, head_dim, s, batch, inner, scale, probs = std::move(probs)](
          Tape<T>& tp, const TensorT<T>& gy) {
        const TensorT<T>& qv = tp.value(q);
        const TensorT<T>& kv = tp.value(k);
        const TensorT<T>& vv = tp.value(v);
        TensorT<T> gq(qv.shape()), gk(kv.shape()), gv(vv.shape());
        std::vector<T> dp(static_cast<std::size_t>(s));
        for (std::int64_t b = 0; b < batch; ++b) {
          for (int h = 0; h < heads; ++h) {
            for (std::int64_t i = 0; i < s; ++i) {
              const T* p = probs.data() + ((b * heads + h) * s + i) * s;
              const T* goi = gy.data().data() + (b * s + i) * inner + h * head_dim;
              double rowdot = 0;
              for (std::int64_t j = 0; j < s; ++j) {
                const T* vj = vv.data().data() + (b * s + j) * inner + h * head_dim;
                T* gvj = gv.data().data() + (b * s + j) * inner + h * head_dim;
                T acc{0};
                for (int e = 0; e < head_dim; ++e) {
                  acc += goi[e] * vj[e];
                  gvj[e] += p[j] * goi[e];
                }
                dp[j] = acc;
                rowdot += static_cast<double>(acc) * p[j];
              }
              const T* qi = qv.data().data() + (b * s + i) * inner + h * head_dim;
              T* gqi = gq.data().data() + (b * s + i) * inner + h * head_dim;
              for (std::int64_t j = 0; j < s; ++j) {
                const T ds = static_cast<T>(p[j] * (dp[j] - rowdot)) * scale;
                const T* kj = kv.data().data() + (b * s + j) * inner + h * head_dim;
                T* gkj = gk.data().data() + (b * s + j) * inner + h * head_dim;
                for (int e = 0; e < head_dim; ++e) {
                  gqi[e] += ds * kj[e];
                  gkj[e] += ds * qi[e];
                }
              }
            }
          }
        }
        tp.accumulate(q, std::move(gq));
        tp.accumulate(k, std::move(gk));
        tp.accumulate(v, std::move(gv));
      });
}

template <typename T>
Var multi_head_attention(Tape<T>& tape, Var tokens, int heads, int head_dim,
                         const AttentionVars& p) {
  if (heads < 1 || head_dim < 1) {
    throw ShapeError("multi_head_attention: heads and head_dim must be positive, got " +
                     std::to_string(heads) + " and " + std::to_string(head_dim));
  }
  const Var q = linear(tape, tokens, p.q_weight, p.q_bias);
  const Var k = linear(tape, tokens, p.k_weight, p.k_bias);
  const Var v = linear(tape, tokens, p.v_weight, p.v_bias);
  const Var mixed = attention(tape, q, k, v, heads, head_dim);
  return linear(tape, mixed, p.out_weight, p.out_bias);
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const TensorT<T>& av = tape.value(a);
  const TensorT<T>& bv = tape.value(b);
  if (av.shape() != bv.shape()) {
    throw ShapeError("add: shapes " + to_string(av.shape()) + " and " + to_string(bv.shape()) +
                     " differ");
  }
  TensorT<T> out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& tp, const TensorT<T>& gy) {
    tp.accumulate(a, gy);
    tp.accumulate(b, gy);
  });
}

template <typename T>
Var add_trailing(Tape<T>& tape, Var x, Var y) {
  const TensorT<T>& xv = tape.value(x);
  const TensorT<T>& yv = tape.value(y);
  const Shape& xs = xv.shape();
  const Shape& ys = yv.shape();
  if (ys.size() > xs.size() || !std::equal(ys.rbegin(), ys.rend(), xs.rbegin())) {
    throw ShapeError("add_trailing: " + to_string(ys) + " is not a trailing shape of " +
                     to_string(xs));
  }
  const std::int64_t m = yv.size();
  TensorT<T> out(xs);
  for (std::int64_t i = 0; i < xv.size(); ++i) out[i] = xv[i] + yv[i % m];
  return tape.record(std::move(out), {x, y}, [x, y, m](Tape<T>& tp, const TensorT<T>& gy) {
    tp.accumulate(x, gy);
    if (tp.requires_grad(y)) {
      TensorT<T> g(tp.value(y).shape());
      for (std::int64_t i = 0; i < gy.size(); ++i) g[i % m] += gy[i];
      tp.accumulate(y, std::move(g));
    }
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var x, double factor) {
  const TensorT<T>& xv = tape.value(x);
  const T f = static_cast<T>(factor);
  TensorT<T> out(xv.shape());
  for (std::int64_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * f;
  return tape.record(std::move(out), {x}, [x, f](Tape<T>& tp, const TensorT<T>& gy) {
    TensorT<T> g(gy.shape());
    for (std::int64_t i = 0; i < gy.size(); ++i) g[i] = gy[i] * f;
    tp.accumulate(x, std::move(g));
  });
}

template <typename T>
Var transpose_last2(Tape<T>& tape, Var x) {
  const TensorT<T>& xv = tape.value(x);
  if (xv.rank() < 2) throw ShapeError("transpose_last2: need rank >= 2, got " + to_string(xv.shape()));
  const std::int64_t a = xv.shape()[xv.rank() - 2];
  const std::int64_t b = xv.shape().back();
  const std::int64_t outer = xv.size() / (a * b);
  Shape os = xv.shape();
  std::swap(os[os.size() - 2], os[os.size() - 1]);
  auto transpose = [](const TensorT<T>& src, TensorT<T>& dst, std::int64_t outer, std::int64_t a,
                      std::int64_t b) {
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t i = 0; i < a; ++i)
        for (std::int64_t j = 0; j < b; ++j) dst[(o * b + j) * a + i] = src[(o * a + i) * b + j];
  };
  TensorT<T> out(os);
  transpose(xv, out, outer, a, b);
  return tape.record(std::move(out), {x},
                     [x, a, b, outer, transpose](Tape<T>& tp, const TensorT<T>& gy) {
                       TensorT<T> gx(tp.value(x).shape());
                       transpose(gy, gx, outer, b, a);
                       tp.accumulate(x, std::move(gx));
                     });
}

template <typename T>
Var prepend_token(Tape<T>& tape, Var x, Var token) {
  const TensorT<T>& xv = tape.value(x);
  const TensorT<T>& tv = tape.value(token);
  if (xv.rank() < 2 || tv.shape() != Shape{xv.shape().back()}) {
    throw ShapeError("prepend_token: token " + to_string(tv.shape()) + " does not fit rows of " +
                     to_string(xv.shape()));
  }
  const std::int64_t d = xv.shape().back();
  const std::int64_t l = xv.shape()[xv.rank() - 2];
  const std::int64_t outer = xv.size() / (l * d);
  Shape os = xv.shape();
  os[os.size() - 2] = l + 1;
  TensorT<T> out(os);
  for (std::int64_t o = 0; o < outer; ++o) {
    T* dst = out.data().data() + o * (l + 1) * d;
    std::copy_n(tv.data().data(), d, dst);
    std::copy_n(xv.data().data() + o * l * d, l * d, dst + d);
  }
  return tape.record(std::move(out), {x, token},
                     [x, token, d, l, outer](Tape<T>& tp, const TensorT<T>& gy) {
                       if (tp.requires_grad(x)) {
                         TensorT<T> gx(tp.value(x).shape());
                         for (std::int64_t o = 0; o < outer; ++o) {
                           std::copy_n(gy.data().data() + (o * (l + 1) + 1) * d, l * d,
                                       gx.data().data() + o * l * d);
                         }
                         tp.accumulate(x, std::move(gx));
                       }
                       if (tp.requires_grad(token)) {
                         TensorT<T> gt({d});
                         for (std::int64_t o = 0; o < outer; ++o) {
                           for (std::int64_t i = 0; i < d; ++i) gt[i] += gy[o * (l + 1) * d + i];
                         }
                         tp.accumulate(token, std::move(gt));
                       }
                     });
}

template <typename T>
Var select_token(Tape<T>& tape, Var x, std::int64_t index) {
  const TensorT<T>& xv = tape.value(x);
  if (xv.rank() < 2) throw ShapeError("select_token: need [..., S, D], got " + to_string(xv.shape()));
  const std::int64_t d = xv.shape().back();
  const std::int64_t s = xv.shape()[xv.rank() - 2];
  if (index < 0 || index >= s) {
    throw ShapeError("select_token: index " + std::to_string(index) + " outside " +
                     std::to_string(s) + " tokens");
  }
  const std::int64_t outer = xv.size() / (s * d);
  Shape os(xv.shape().begin(), xv.shape().end() - 2);
  os.push_back(d);
  TensorT<T> out(os);
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy_n(xv.data().data() + (o * s + index) * d, d, out.data().data() + o * d);
  }
  return tape.record(std::move(out), {x},
                     [x, index, s, d, outer](Tape<T>& tp, const TensorT<T>& gy) {
                       TensorT<T> gx(tp.value(x).shape());
                       for (std::int64_t o = 0; o < outer; ++o) {
                         std::copy_n(gy.data().data() + o * d, d,
                                     gx.data().data() + (o * s + index) * d);
                       }
                       tp.accumulate(x, std::move(gx));
                     });
}

template <typename T>
Var spatial_avg_pool(Tape<T>& tape, Var x) {
  const TensorT<T>& xv = tape.value(x);
  const VideoDims d = video_dims(xv.shape(), "spatial_avg_pool");
  const std::int64_t planes = d.n * d.c * d.t;
  const std::int64_t hw = d.h * d.w;
  Shape os = d.batched ? Shape{d.n, d.c, d.t} : Shape{d.c, d.t};
  TensorT<T> out(os);
  std::vector<T> buf(static_cast<std::size_t>(hw));
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = xv.data().data() + p * hw;
    std::copy_n(src, hw, buf.begin());
    std::sort(buf.begin(), buf.end());
    long double acc = 0;
    for (auto v : buf) acc += v;
    out[p] = static_cast<T>(acc / static_cast<long double>(hw));
  }
  return tape.record(std::move(out), {x}, [x, planes, hw](Tape<T>& tp, const TensorT<T>& gy) {
    TensorT<T> gx(tp.value(x).shape());
    const T inv = static_cast<T>(1.0 / static_cast<double>(hw));
    for (std::int64_t p = 0; p < planes; ++p) {
      const T g = gy[p] * inv;
      std::fill_n(gx.data().data() + p * hw, hw, g);
    }
    tp.accumulate(x, std::move(gx));
  });
}

template <typename T>
Var mean_last_axis(Tape<T>& tape, Var x) {
  const TensorT<T>& xv = tape.value(x);
  const std::int64_t n = xv.shape().back();
  const std::int64_t rows = leading(xv.shape());
  Shape os(xv.shape().begin(), xv.shape().end() - 1);
  if (os.empty()) os = {1};
  TensorT<T> out(os);
  for (std::int64_t r = 0; r < rows; ++r) {
    T acc{0};
    for (std::int64_t i = 0; i < n; ++i) acc += xv[r * n + i];
    out[r] = acc / static_cast<T>(n);
  }
  return tape.record(std::move(out), {x}, [x, n, rows](Tape<T>& tp, const TensorT<T>& gy) {
    TensorT<T> gx(tp.value(x).shape());
    for (std::int64_t r = 0; r < rows; ++r) {
      const T g = gy[r] / static_cast<T>(n);
      for (std::int64_t i = 0; i < n; ++i) gx[r * n + i] = g;
    }
    tp.accumulate(x, std::move(gx));
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape) {
  TensorT<T> out = tape.value(x).reshaped(std::move(shape));
  return tape.record(std::move(out), {x}, [x](Tape<T>& tp, const TensorT<T>& gy) {
    tp.accumulate(x, gy.reshaped(tp.value(x).shape()));
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  const TensorT<T>& xv = tape.value(x);
  T acc{0};
  for (auto v : xv.data()) acc += v;
  return tape.record(TensorT<T>::scalar(acc), {x}, [x](Tape<T>& tp, const TensorT<T>& gy) {
    tp.accumulate(x, TensorT<T>(tp.value(x).shape(), gy[0]));
  });
}

template <typename T>
Var mean(Tape<T>& tape, Var x) {
  const TensorT<T>& xv = tape.value(x);
  T acc{0};
  for (auto v : xv.data()) acc += v;
  const T n = static_cast<T>(xv.size());
  return tape.record(TensorT<T>::scalar(acc / n), {x}, [x, n](Tape<T>& tp, const TensorT<T>& gy) {
    tp.accumulate(x, TensorT<T>(tp.value(x).shape(), gy[0] / n));
  });
}

template <typename T>
Var dot(Tape<T>& tape, Var x, const BasicTensor<T>& weights) {
  const TensorT<T>& xv = tape.value(x);
  if (xv.size() != weights.size()) {
    throw ShapeError("dot: " + to_string(xv.shape()) + " vs " + to_string(weights.shape()));
  }
  T acc{0};
  for (std::int64_t i = 0; i < xv.size(); ++i) acc += xv[i] * weights[i];
  return tape.record(TensorT<T>::scalar(acc), {x},
                     [x, weights](Tape<T>& tp, const TensorT<T>& gy) {
                       TensorT<T> gx(tp.value(x).shape());
                       for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] = weights[i] * gy[0];
                       tp.accumulate(x, std::move(gx));
                     });
}

template <typename T>
Var bce_with_logits(Tape<T>& tape, Var logits, const std::vector<T>& labels) {
  const TensorT<T>& zv = tape.value(logits);
  if (static_cast<std::int64_t>(labels.size()) != zv.size()) {
    throw ShapeError("bce_with_logits: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(zv.size()) + " logits");
  }
  for (auto y : labels) {
    if (y != T{0} && y != T{1}) throw Error("bce_with_logits: labels must be 0 or 1");
  }
  double total = 0;
  for (std::int64_t i = 0; i < zv.size(); ++i) {
    const double z = zv[i];
    total += std::max(z, 0.0) - z * labels[i] + std::log1p(std::exp(-std::abs(z)));
  }
  const double n = static_cast<double>(zv.size());
  return tape.record(TensorT<T>::scalar(static_cast<T>(total / n)), {logits},
                     [logits, labels, n](Tape<T>& tp, const TensorT<T>& gy) {
                       const TensorT<T>& zv = tp.value(logits);
                       TensorT<T> gz(zv.shape());
                       for (std::int64_t i = 0; i < zv.size(); ++i) {
                         gz[i] = static_cast<T>((sigmoid_value(zv[i]) - labels[i]) / n * gy[0]);
                       }
                       tp.accumulate(logits, std::move(gz));
                     });
}

#define FTCN_INSTANTIATE_OPS(T)                                                                \
  template Var conv3d<T>(Tape<T>&, Var, Var, std::optional<Var>, Dims3, Dims3);              \
  template Var maxpool3d<T>(Tape<T>&, Var, Dims3, Dims3, Dims3);                              \
  template Var batch_norm<T>(Tape<T>&, Var, Var, Var, Mode, RunningStats<T>*, double, double); \
  template Var layer_norm<T>(Tape<T>&, Var, Var, Var, double);                                \
  template Var normalize<T>(Tape<T>&, Var, NormKind, Var, Var, Mode, RunningStats<T>*, double); \
  template Var activation<T>(Tape<T>&, Var, Activation);                                      \
  template Var linear<T>(Tape<T>&, Var, Var, std::optional<Var>);                             \
  template Var softmax<T>(Tape<T>&, Var, int);                                                \
  template Var attention<T>(Tape<T>&, Var, Var, Var, int, int);                               \
  template Var multi_head_attention<T>(Tape<T>&, Var, int, int, const AttentionVars&);        \
  template Var add<T>(Tape<T>&, Var, Var);                                                    \
  template Var add_trailing<T>(Tape<T>&, Var, Var);                                           \
  template Var scale<T>(Tape<T>&, Var, double);                                               \
  template Var transpose_last2<T>(Tape<T>&, Var);                                             \
  template Var prepend_token<T>(Tape<T>&, Var, Var);                                          \
  template Var select_token<T>(Tape<T>&, Var, std::int64_t);                                  \
  template Var spatial_avg_pool<T>(Tape<T>&, Var);                                            \
  template Var mean_last_axis<T>(Tape<T>&, Var);                                              \
  template Var reshape<T>(Tape<T>&, Var, Shape);                                              \
  template Var sum<T>(Tape<T>&, Var);                                                         \
  template Var mean<T>(Tape<T>&, Var);                                                        \
  template Var dot<T>(Tape<T>&, Var, const BasicTensor<T>&);                                  \
  template Var bce_with_logits<T>(Tape<T>&, Var, const std::vector<T>&);

FTCN_INSTANTIATE_OPS(float)
FTCN_INSTANTIATE_OPS(double)
#undef FTCN_INSTANTIATE_OPS

}  // namespace nn
}  // namespace ftcn
