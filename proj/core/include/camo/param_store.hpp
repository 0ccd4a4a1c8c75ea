#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "camo/rng.hpp"
#include "camo/tensor.hpp"

namespace camo {

/// Named trainable tensors, iterated in lexicographic name order.
template <typename Real>
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor<Real>>;

  /// Registers a tensor; it is stored as a gradient-requiring leaf.
  Tensor<Real>& add(const std::string& name, Tensor<Real> tensor);
  const Tensor<Real>& get(const std::string& name) const;
  Tensor<Real>& get(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t total_elements() const;
  std::vector<std::string> names() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void clear_grads();
  /// Moves every entry of `other` in; names must not collide.
  void merge(const ParamStore& other);
  /// Entries whose name starts with `prefix`, sharing tensors with this store.
  ParamStore subset(const std::string& prefix) const;

  /// Deep copy at another precision.
  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (const auto& [name, t] : params_) out.add(name, t.template cast<Other>(true));
    return out;
  }

  ParamStore clone() const { return cast<Real>(); }

  /// CRC-32 over names, shapes and raw value bytes.
  std::uint32_t checksum() const;

 private:
  Map params_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename Real>
Tensor<Real> glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

std::uint32_t crc32_bytes(const void* data, std::size_t size, std::uint32_t running = 0);

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace camo
