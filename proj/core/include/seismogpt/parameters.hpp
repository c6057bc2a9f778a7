#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "seismogpt/tensor.hpp"

namespace seismo {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

// Ordered, named collection of trainable leaves. Registration order is the
// checkpoint order.
class ParameterStore {
 public:
  // Registers `t` (marked requires_grad) under a unique name.
  Tensor add(std::string name, Tensor t);

  const std::vector<NamedParameter>& entries() const { return entries_; }
  std::vector<NamedParameter>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

  const NamedParameter* find(std::string_view name) const;
  NamedParameter* find(std::string_view name);

  std::size_t scalar_count() const;
  void zero_grad();
  double grad_norm() const;
  // Rescales all gradients so their global L2 norm is at most `max_norm`.
  // Returns the norm before clipping.
  double clip_grad_norm(double max_norm);

 private:
  std::vector<NamedParameter> entries_;
};

// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

}  // namespace seismo
