#include "seismogpt/parameters.hpp"

#include <algorithm>
#include <cmath>

#include "seismogpt/errors.hpp"

namespace seismo {

Tensor ParameterStore::add(std::string name, Tensor t) {
  if (find(name)) throw ContractError("duplicate parameter name '" + name + "'");
  t.node()->requires_grad = true;
  entries_.push_back({std::move(name), t});
  return t;
}

const NamedParameter* ParameterStore::find(std::string_view name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& p) { return p.name == name; });
  return it == entries_.end() ? nullptr : &*it;
}

NamedParameter* ParameterStore::find(std::string_view name) {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& p) { return p.name == name; });
  return it == entries_.end() ? nullptr : &*it;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += p.tensor.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : entries_) p.tensor.zero_grad();
}

double ParameterStore::grad_norm() const {
  double s = 0.0;
  for (const auto& p : entries_) {
    for (double g : p.tensor.grad()) s += g * g;
  }
  return std::sqrt(s);
}

double ParameterStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) {
    const double f = max_norm / norm;
    for (auto& p : entries_) {
      if (!p.tensor.has_grad()) continue;
      for (double& g : p.tensor.mutable_grad()) g *= f;
    }
  }
  return norm;
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-a, a);
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = u(rng);
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

}  // namespace seismo
