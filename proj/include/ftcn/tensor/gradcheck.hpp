#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ftcn/tensor/tape.hpp"

namespace ftcn {

/// Builds a scalar loss from named leaves registered on the given tape.
using LossBuilder = std::function<Var(Tape<double>&, const std::map<std::string, Var>&)>;

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-4;
  /// Entries probed per tensor; <= 0 probes every entry.
  std::int64_t max_entries = 0;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0;
  std::int64_t probed = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0;

  double max_rel_error() const;
  /// Vacuously true for an empty report.
  bool passed() const { return max_rel_error() < tolerance; }
};

/// |a - n| / max(1e-8, |a| + |n|)
double relative_error(double analytic, double numeric);

/// Central-difference check of reverse-mode gradients for every named input.
GradCheckReport finite_diff_check(const std::map<std::string, TensorD>& inputs,
                                  const LossBuilder& loss, const GradCheckOptions& options = {});

}  // namespace ftcn
