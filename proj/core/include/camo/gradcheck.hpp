#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "camo/param_store.hpp"

namespace camo {

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-4;
  /// Coordinates probed per tensor; 0 probes every element.
  std::size_t max_probes = 0;
  std::uint64_t seed = 0;
};

struct ParamGradError {
  std::string name;
  double rel_err = 0;
  std::size_t probed = 0;
};

struct GradCheckReport {
  std::vector<ParamGradError> params;
  double max_rel_err = 0;
  bool passed = false;
};

using ScalarFn = std::function<Tensor<double>(const ParamStore<double>&)>;

/// Compares backprop gradients with central finite differences.
///
/// The error for a tensor is max|analytic - numeric| divided by the larger of
/// the two gradients' max magnitudes over the probed coordinates (absolute
/// error when both are below 1e-12).
GradCheckReport grad_check(const ScalarFn& loss, ParamStore<double>& params, const GradCheckOptions& options = {});

}  // namespace camo
