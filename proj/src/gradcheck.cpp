#include "gate/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gate/error.hpp"
#include "gate/rng.hpp"

namespace gate {

bool GradCheckReport::passed() const {
  return std::all_of(slots.begin(), slots.end(), [](const SlotCheck& s) { return s.passed; });
}

const SlotCheck& GradCheckReport::at(const std::string& slot) const {
  for (const auto& s : slots)
    if (s.slot == slot) return s;
  throw std::out_of_range("gradient check has no slot '" + slot + "'");
}

double GradCheckReport::worst_rel_error() const {
  double w = 0.0;
  for (const auto& s : slots) w = std::max(w, s.max_rel_error);
  return w;
}

namespace {

double checked_loss(const LossFn& fn, const ParameterSet& p) {
  const double v = fn(p);
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: loss is not finite");
  return v;
}

}  // namespace

GradCheckReport finite_diff_check(const LossFn& loss_fn, ParameterSet& params,
                                  const Gradients& analytic, const GradCheckOptions& opts) {
  GradCheckReport report;
  Rng rng(opts.seed);
  const double base = checked_loss(loss_fn, params);

  for (const auto& name : params.names()) {
    auto it = analytic.find(name);
    if (it == analytic.end()) throw std::invalid_argument("finite_diff_check: no analytic gradient for '" + name + "'");
    auto values = params.value(name).data();
    const auto grad = it->second.data();
    if (grad.size() != values.size()) throw ShapeError("finite_diff_check: shape mismatch in '" + name + "'");

    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > opts.max_coords_per_slot) {
      rng.shuffle(std::span<std::size_t>(coords));
      coords.resize(opts.max_coords_per_slot);
      std::sort(coords.begin(), coords.end());
    }

    SlotCheck check;
    check.slot = name;
    for (std::size_t c : coords) {
      const double saved = values[c];
      values[c] = saved + opts.step;
      const double up = checked_loss(loss_fn, params);
      values[c] = saved - opts.step;
      const double down = checked_loss(loss_fn, params);
      values[c] = saved;

      const double numeric = (up - down) / (2.0 * opts.step);
      const double abs_err = std::abs(numeric - grad[c]);
      // Rounding in up - down alone contributes about eps * |loss| / step to `numeric`.
      // Errors below that level are not evidence of a wrong gradient, so the denominator
      // never drops below the point where they would reach `tol`.
      const double roundoff = opts.roundoff_factor * std::numeric_limits<double>::epsilon() *
                              std::max({std::abs(base), std::abs(up), std::abs(down)}) / opts.step;
      const double denom = std::max({std::abs(numeric), std::abs(grad[c]), opts.abs_floor, roundoff / opts.tol});
      check.max_abs_error = std::max(check.max_abs_error, abs_err);
      check.max_rel_error = std::max(check.max_rel_error, abs_err / denom);
      ++check.coords_checked;
    }
    check.passed = check.max_rel_error <= opts.tol;
    report.slots.push_back(check);
  }
  return report;
}

}  // namespace gate
