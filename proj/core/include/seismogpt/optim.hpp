#pragma once

#include <cstdint>
#include <vector>

#include "seismogpt/parameters.hpp"

namespace seismo {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t t = 0;
  // First/second moments, one buffer per ParameterStore entry, allocated on
  // the first step.
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// One bias-corrected Adam update of every parameter in `params` from its
// accumulated gradient (missing gradient buffers count as zero). Throws
// NonFiniteError naming the parameter, before touching anything, if any
// gradient is not finite.
void adam_step(ParameterStore& params, AdamState& state, double lr);

}  // namespace seismo
