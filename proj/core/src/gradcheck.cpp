#include "camo/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "camo/errors.hpp"

namespace camo {

namespace {

double evaluate(const ScalarFn& loss, const ParamStore<double>& params) {
  NoGradGuard no_grad;
  const double value = loss(params).item();
  if (!std::isfinite(value)) throw NumericError("grad_check: loss is not finite");
  return value;
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& loss, ParamStore<double>& params, const GradCheckOptions& options) {
  params.clear_grads();
  const auto out = loss(params);
  if (!std::isfinite(out.item())) throw NumericError("grad_check: loss is not finite");
  out.backward();

  GradCheckReport report;
  Rng rng = Rng(options.seed).split("grad_check");
  for (auto& [name, tensor] : params) {
    const std::size_t n = tensor.size();
    std::vector<double> analytic(n, 0.0);
    if (tensor.has_grad()) std::copy(tensor.grad().begin(), tensor.grad().end(), analytic.begin());

    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_probes > 0 && options.max_probes < n) {
      for (std::size_t i = 0; i < options.max_probes; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n - 1)));
        std::swap(coords[i], coords[j]);
      }
      coords.resize(options.max_probes);
    }

    double max_diff = 0, max_a = 0, max_n = 0;
    auto values = tensor.mutable_values();
    for (auto i : coords) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = evaluate(loss, params);
      values[i] = saved - options.step;
      const double down = evaluate(loss, params);
      values[i] = saved;
      const double numeric = (up - down) / (2 * options.step);
      max_diff = std::max(max_diff, std::abs(numeric - analytic[i]));
      max_a = std::max(max_a, std::abs(analytic[i]));
      max_n = std::max(max_n, std::abs(numeric));
    }
    const double denom = std::max(max_a, max_n);
    const double rel = denom < 1e-12 ? max_diff : max_diff / denom;
    report.params.push_back({name, rel, coords.size()});
    report.max_rel_err = std::max(report.max_rel_err, rel);
  }
  params.clear_grads();
  report.passed = report.max_rel_err <= options.tol;
  return report;
}

}  // namespace camo
