#include "gate/params.hpp"

#include <cmath>

#include "gate/error.hpp"

namespace gate {

void AdamConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("adam: learning_rate must be > 0");
  if (!(beta1 > 0 && beta1 < 1)) throw ConfigError("adam: beta1 must lie in (0, 1)");
  if (!(beta2 > 0 && beta2 < 1)) throw ConfigError("adam: beta2 must lie in (0, 1)");
  if (!(epsilon > 0)) throw ConfigError("adam: epsilon must be > 0");
}

void ParameterSet::add(const std::string& name, Matrix value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter slot '" + name + "'");
  ParamSlot s;
  s.first_moment = Matrix(value.rows(), value.cols());
  s.second_moment = Matrix(value.rows(), value.cols());
  s.value = std::move(value);
  slots_.emplace(name, std::move(s));
}

ParamSlot& ParameterSet::slot(const std::string& name) {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw std::out_of_range("no parameter slot '" + name + "'");
  return it->second;
}

const ParamSlot& ParameterSet::slot(const std::string& name) const {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw std::out_of_range("no parameter slot '" + name + "'");
  return it->second;
}

Matrix& ParameterSet::value(const std::string& name) { return slot(name).value; }
const Matrix& ParameterSet::value(const std::string& name) const { return slot(name).value; }

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(slots_.size());
  for (const auto& [name, _] : slots_) out.push_back(name);
  return out;
}

std::size_t ParameterSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, s] : slots_) n += s.value.size();
  return n;
}

Gradients ParameterSet::zero_gradients() const {
  Gradients g;
  for (const auto& [name, s] : slots_) g.emplace(name, Matrix(s.value.rows(), s.value.cols()));
  return g;
}

bool ParameterSet::operator==(const ParameterSet& other) const {
  if (step_ != other.step_ || slots_.size() != other.slots_.size()) return false;
  for (const auto& [name, s] : slots_) {
    auto it = other.slots_.find(name);
    if (it == other.slots_.end()) return false;
    const auto& o = it->second;
    if (!(s.value == o.value && s.first_moment == o.first_moment &&
          s.second_moment == o.second_moment))
      return false;
  }
  return true;
}

void adam_step(ParameterSet& params, const Gradients& grads, const AdamConfig& cfg) {
  for (const auto& [name, s] : params.slots_) {
    auto it = grads.find(name);
    if (it == grads.end()) throw std::invalid_argument("adam_step: missing gradient for '" + name + "'");
    if (!it->second.same_shape(s.value)) {
      throw ShapeError("adam_step: gradient for '" + name + "' has shape " +
                       it->second.shape_string() + ", parameter has " + s.value.shape_string());
    }
    if (!all_finite(it->second.data())) {
      throw NumericError("adam_step: non-finite gradient in slot '" + name + "'");
    }
  }

  const std::uint64_t t = params.step_ + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& [name, s] : params.slots_) {
    const auto g = grads.at(name).data();
    auto w = s.value.data();
    auto m = s.first_moment.data();
    auto v = s.second_moment.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
  params.step_ = t;
}

}  // namespace gate
