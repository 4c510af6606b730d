#pragma once

#include <functional>
#include <string>
#include <vector>

#include "handformer/numerics/tape.hpp"

namespace handformer::nn {

struct GradCheckEntry {
  std::string name;
  std::size_t count = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;  // flat index of the largest error
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t evaluations = 0;

  bool passed() const { return max_rel_error < tolerance; }
};

// Builds the scalar loss on the given tape from the current parameter values.
using LossFunction = std::function<Var<double>(Tape<double>&)>;

// Compares reverse-mode gradients against central differences
// (L(p + eps) - L(p - eps)) / (2 eps) for every trainable scalar, using the
// relative error |a - n| / max(|a|, |n|, 1e-8). Restores all values.
// A nonzero `max_per_parameter` checks only that many evenly spaced entries
// of each tensor.
GradCheckReport finite_diff_check(const LossFunction& loss_fn, const ParameterSet<double>& params,
                                  double eps = 1e-5, double tol = 1e-4,
                                  std::size_t max_per_parameter = 0);

}  // namespace handformer::nn
