#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gate/params.hpp"

namespace gate {

struct SlotCheck {
  std::string slot;
  std::size_t coords_checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<SlotCheck> slots;

  bool passed() const;
  const SlotCheck& at(const std::string& slot) const;
  double worst_rel_error() const;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-4;
  // Coordinates sampled per slot; slots no larger than this are checked exhaustively.
  std::size_t max_coords_per_slot = 64;
  // Relative error is |a - n| / max(|a|, |n|, abs_floor), so gradients that are both
  // within roundoff of zero do not register as failures.
  double abs_floor = 1e-6;
  // Multiple of eps * |loss| / step treated as difference-quotient noise.
  double roundoff_factor = 16.0;
  std::uint64_t seed = 7;
};

using LossFn = std::function<double(const ParameterSet&)>;

// Central-difference gradient check of `analytic` against `loss_fn` around `params`.
// `params` is perturbed in place and restored before return.
GradCheckReport finite_diff_check(const LossFn& loss_fn, ParameterSet& params,
                                  const Gradients& analytic, const GradCheckOptions& opts = {});

}  // namespace gate
