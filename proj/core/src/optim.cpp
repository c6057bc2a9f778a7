#include "seismogpt/optim.hpp"

#include <cmath>

#include "seismogpt/errors.hpp"

namespace seismo {

void adam_step(ParameterStore& params, AdamState& state, double lr) {
  if (!(lr >= 0.0)) throw ContractError("adam_step: learning rate must be non-negative");
  auto& entries = params.entries();
  if (state.m.empty()) {
    state.m.resize(entries.size());
    state.v.resize(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      state.m[i].assign(entries[i].tensor.numel(), 0.0);
      state.v[i].assign(entries[i].tensor.numel(), 0.0);
    }
  }
  if (state.m.size() != entries.size()) {
    throw ContractError("adam_step: optimizer state built for a different parameter set");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (state.m[i].size() != entries[i].tensor.numel()) {
      throw DimensionError("adam_step: moment buffers do not match parameter '" + entries[i].name + "'");
    }
    for (double g : entries[i].tensor.grad()) {
      if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient in parameter '" + entries[i].name + "'");
    }
  }

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& p = entries[i].tensor;
    auto data = p.mutable_data();
    const auto grad = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      data[j] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

}  // namespace seismo
