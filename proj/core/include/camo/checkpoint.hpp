#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "camo/optim.hpp"
#include "camo/param_store.hpp"

namespace camo {

inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kFloat32 = 1, kFloat64 = 2 };

/// Tensor payload kept as little-endian bytes so a load/save cycle is exact.
struct StoredTensor {
  std::string name;
  DType dtype = DType::kFloat32;
  Shape shape;
  std::vector<std::uint8_t> bytes;

  template <typename Real>
  static StoredTensor from(const std::string& name, std::span<const Real> values, const Shape& shape);
  template <typename Real>
  std::vector<Real> values() const;

  bool operator==(const StoredTensor&) const = default;
};

/// Layout: "CAMF", u16 version, then the payload (config text, metadata,
/// tensors), then CRC-32 of the payload. All integers little-endian.
struct Checkpoint {
  std::string config;                       // serialized RunConfig
  std::map<std::string, std::string> meta;  // stage, step, ...
  std::vector<StoredTensor> tensors;

  const StoredTensor& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
  const std::string& meta_value(const std::string& key) const;

  bool operator==(const Checkpoint&) const = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& source = "<checkpoint>");

/// Writes to a temporary sibling, then renames over `path`.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename Real>
void store_params(Checkpoint& checkpoint, const ParamStore<Real>& params, const std::string& prefix = "");
/// Every tensor whose name starts with `prefix`, with the prefix stripped.
template <typename Real>
ParamStore<Real> restore_params(const Checkpoint& checkpoint, const std::string& prefix = "");

/// Moments under "adam.m/" and "adam.v/", step in meta "adam.step".
void store_adam(Checkpoint& checkpoint, const AdamState<float>& state);
AdamState<float> restore_adam(const Checkpoint& checkpoint);

}  // namespace camo
