#include "camo/param_store.hpp"

#include <cmath>
#include <zlib.h>

#include "camo/errors.hpp"

namespace camo {

std::uint32_t crc32_bytes(const void* data, std::size_t size, std::uint32_t running) {
  auto crc = static_cast<uLong>(running);
  const auto* bytes = static_cast<const Bytef*>(data);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, bytes, chunk);
    bytes += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

template <typename Real>
Tensor<Real>& ParamStore<Real>::add(const std::string& name, Tensor<Real> tensor) {
  if (name.empty()) throw ConfigError("parameter name must not be empty");
  if (params_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  if (!tensor.requires_grad()) tensor = tensor.clone(true);
  return params_.emplace(name, std::move(tensor)).first->second;
}

template <typename Real>
const Tensor<Real>& ParamStore<Real>::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

template <typename Real>
Tensor<Real>& ParamStore<Real>::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

template <typename Real>
std::size_t ParamStore<Real>::total_elements() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

template <typename Real>
std::vector<std::string> ParamStore<Real>::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

template <typename Real>
void ParamStore<Real>::clear_grads() {
  for (auto& [_, t] : params_) t.clear_grad();
}

template <typename Real>
void ParamStore<Real>::merge(const ParamStore& other) {
  for (const auto& [name, t] : other) add(name, t);
}

template <typename Real>
ParamStore<Real> ParamStore<Real>::subset(const std::string& prefix) const {
  ParamStore out;
  for (const auto& [name, t] : params_)
    if (name.compare(0, prefix.size(), prefix) == 0) out.add(name, t);
  return out;
}

template <typename Real>
std::uint32_t ParamStore<Real>::checksum() const {
  std::uint32_t crc = 0;
  for (const auto& [name, t] : params_) {
    crc = crc32_bytes(name.data(), name.size(), crc);
    for (auto e : t.shape()) {
      const auto extent = static_cast<std::uint64_t>(e);
      crc = crc32_bytes(&extent, sizeof extent, crc);
    }
    crc = crc32_bytes(t.values().data(), t.size() * sizeof(Real), crc);
  }
  return crc;
}

template <typename Real>
Tensor<Real> glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<Real> values(numel(shape));
  for (auto& v : values) v = static_cast<Real>(rng.uniform(-limit, limit));
  return Tensor<Real>(std::move(shape), std::move(values), true);
}

template class ParamStore<float>;
template class ParamStore<double>;
template Tensor<float> glorot_uniform(Shape, std::size_t, std::size_t, Rng&);
template Tensor<double> glorot_uniform(Shape, std::size_t, std::size_t, Rng&);

}  // namespace camo
