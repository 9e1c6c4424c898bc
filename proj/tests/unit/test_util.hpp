#pragma once

#include <cmath>
#include <random>

#include "ftcn/tensor/tensor.hpp"

namespace ftcn::testing {

template <typename T = float>
BasicTensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                             double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// Standard normal CDF by composite Simpson quadrature of the density from -12.
inline double normal_cdf_quadrature(double x, int intervals = 20000) {
  const double a = -12.0;
  const double h = (x - a) / intervals;
  auto pdf = [](double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * M_PI); };
  double s = pdf(a) + pdf(x);
  for (int i = 1; i < intervals; ++i) s += pdf(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace ftcn::testing
