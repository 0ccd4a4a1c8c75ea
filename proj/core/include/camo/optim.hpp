#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "camo/param_store.hpp"

namespace camo {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Real>
struct AdamState {
  std::int64_t step = 0;
  std::map<std::string, std::vector<Real>> first_moment;
  std::map<std::string, std::vector<Real>> second_moment;
};

/// One bias-corrected Adam update over every parameter, then clears grads.
/// Every parameter must carry a gradient.
template <typename Real>
void adam_step(ParamStore<Real>& params, AdamState<Real>& state, const AdamConfig& config);

}  // namespace camo
