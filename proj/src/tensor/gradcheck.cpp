#include "ftcn/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ftcn {

double GradCheckReport::max_rel_error() const {
  double m = 0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

namespace {

double evaluate(const std::map<std::string, TensorD>& inputs, const LossBuilder& loss) {
  Tape<double> tape;
  std::map<std::string, Var> vars;
  for (const auto& [name, value] : inputs) vars.emplace(name, tape.constant(value));
  const Var out = loss(tape, vars);
  return tape.value(out)[0];
}

std::vector<std::int64_t> probe_indices(std::int64_t n, std::int64_t limit, std::uint64_t seed) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  if (limit <= 0 || limit >= n) return idx;
  std::mt19937_64 rng(seed);
  for (std::int64_t i = 0; i < limit; ++i) {
    const auto j = i + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(limit));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport finite_diff_check(const std::map<std::string, TensorD>& inputs,
                                  const LossBuilder& loss, const GradCheckOptions& options) {
  GradCheckReport report;
  report.tolerance = options.tolerance;
  if (inputs.empty()) return report;

  Tape<double> tape;
  std::map<std::string, Var> vars;
  for (const auto& [name, value] : inputs) vars.emplace(name, tape.parameter(name, value));
  const GradMap<double> analytic = tape.backward(loss(tape, vars));

  std::map<std::string, TensorD> probe = inputs;
  std::uint64_t salt = 0;
  for (const auto& [name, value] : inputs) {
    GradCheckEntry entry{name, 0.0, 0};
    const TensorD& grad = analytic.at(name);
    for (auto i : probe_indices(value.size(), options.max_entries, options.seed + salt++)) {
      TensorD& p = probe.at(name);
      const double original = p[i];
      p[i] = original + options.step;
      const double up = evaluate(probe, loss);
      p[i] = original - options.step;
      const double down = evaluate(probe, loss);
      p[i] = original;
      const double numeric = (up - down) / (2 * options.step);
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(grad[i], numeric));
      ++entry.probed;
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace ftcn
