#include "handformer/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace handformer::nn {

namespace {

double evaluate(const LossFunction& loss_fn) {
  Tape<double> tape;
  const double value = loss_fn(tape).value().item();
  require(std::isfinite(value), ErrorCode::kNumerical, "gradient check: non-finite loss");
  return value;
}

}  // namespace

GradCheckReport finite_diff_check(const LossFunction& loss_fn, const ParameterSet<double>& params,
                                  double eps, double tol, std::size_t max_per_parameter) {
  require(eps > 0 && tol > 0, ErrorCode::kInvalidArgument, "gradient check: eps and tol must be positive");
  zero_grads(params);
  {
    Tape<double> tape;
    Var<double> loss = loss_fn(tape);
    require(std::isfinite(loss.value().item()), ErrorCode::kNumerical,
            "gradient check: non-finite loss");
    tape.backward(loss);
  }
  GradCheckReport report;
  report.tolerance = tol;
  report.evaluations = 1;
  for (Parameter<double>* p : params) {
    if (!p->trainable) continue;
    const std::size_t size = p->value.size();
    const std::size_t checked = max_per_parameter ? std::min(size, max_per_parameter) : size;
    GradCheckEntry entry{p->name, checked, 0.0};
    for (std::size_t c = 0; c < checked; ++c) {
      const std::size_t i = c * size / checked;
      const double original = p->value[i];
      p->value[i] = original + eps;
      const double plus = evaluate(loss_fn);
      p->value[i] = original - eps;
      const double minus = evaluate(loss_fn);
      p->value[i] = original;
      report.evaluations += 2;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      if (c == 0 || rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
        entry.worst_analytic = analytic;
        entry.worst_numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace handformer::nn
