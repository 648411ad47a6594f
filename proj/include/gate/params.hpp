#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gate/tensor.hpp"

namespace gate {

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// A learnable tensor plus its Adam moment buffers. Vectors are stored as n x 1 matrices.
struct ParamSlot {
  Matrix value;
  Matrix first_moment;
  Matrix second_moment;
};

using Gradients = std::map<std::string, Matrix>;

// Named learnable tensors with Adam state. Iteration order is the lexicographic slot
// name order, which is what checkpoints and gradient reductions rely on.
class ParameterSet {
 public:
  void add(const std::string& name, Matrix value);
  bool contains(const std::string& name) const { return slots_.count(name) != 0; }

  Matrix& value(const std::string& name);
  const Matrix& value(const std::string& name) const;
  ParamSlot& slot(const std::string& name);
  const ParamSlot& slot(const std::string& name) const;

  std::vector<std::string> names() const;
  std::size_t num_scalars() const;
  const std::map<std::string, ParamSlot>& slots() const { return slots_; }

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t step) { step_ = step; }

  // Zero-filled gradient buffers matching every slot.
  Gradients zero_gradients() const;

  bool operator==(const ParameterSet& other) const;

 private:
  friend void adam_step(ParameterSet&, const Gradients&, const AdamConfig&);
  std::map<std::string, ParamSlot> slots_;
  std::uint64_t step_ = 0;
};

// Bias-corrected Adam update of every slot. Throws if a slot has no gradient, a gradient
// has the wrong shape, or contains non-finite values; parameters are untouched on error.
void adam_step(ParameterSet& params, const Gradients& grads, const AdamConfig& cfg);

}  // namespace gate
