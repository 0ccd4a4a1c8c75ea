#include "camo/optim.hpp"

#include <cmath>

#include "camo/errors.hpp"

namespace camo {

template <typename Real>
void adam_step(ParamStore<Real>& params, AdamState<Real>& state, const AdamConfig& config) {
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) throw InvariantError("adam_step: parameter '" + name + "' has no gradient");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<Real>(config.beta1);
  const auto b2 = static_cast<Real>(config.beta2);
  const auto step_size = static_cast<Real>(config.lr / bc1);
  const auto inv_bc2 = static_cast<Real>(1.0 / bc2);
  const auto eps = static_cast<Real>(config.eps);

  for (auto& [name, t] : params) {
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.empty()) {
      m.assign(t.size(), Real(0));
      v.assign(t.size(), Real(0));
    }
    auto g = t.grad();
    auto x = t.mutable_values();
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (Real(1) - b1) * g[i];
      v[i] = b2 * v[i] + (Real(1) - b2) * g[i] * g[i];
      x[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
    }
    t.clear_grad();
  }
}

template void adam_step(ParamStore<float>&, AdamState<float>&, const AdamConfig&);
template void adam_step(ParamStore<double>&, AdamState<double>&, const AdamConfig&);

}  // namespace camo
