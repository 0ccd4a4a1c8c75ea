#include "camo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "camo/errors.hpp"

namespace camo {
namespace {

constexpr char kMagic[4] = {'C', 'A', 'M', 'F'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void str16(const std::string& s) {
    if (s.size() > 0xffff) throw InputError("checkpoint: name too long: " + s.substr(0, 40));
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s.data(), s.size());
  }
  void str32(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, const std::string& source) : data_(data), source_(source) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::string str16() { return text(u16()); }
  std::string str32() { return text(u32()); }
  std::span<const std::uint8_t> raw(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) throw IntegrityError(source_ + ": truncated checkpoint");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string text(std::size_t n) {
    auto s = raw(n);
    return std::string(s.begin(), s.end());
  }
  std::span<const std::uint8_t> data_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::size_t dtype_size(DType d) { return d == DType::kFloat32 ? 4 : 8; }

}  // namespace

template <typename Real>
StoredTensor StoredTensor::from(const std::string& name, std::span<const Real> values, const Shape& shape) {
  static_assert(sizeof(Real) == 4 || sizeof(Real) == 8);
  if (numel(shape) != values.size()) throw DimensionError("checkpoint: shape does not match values for " + name);
  StoredTensor t;
  t.name = name;
  t.dtype = sizeof(Real) == 4 ? DType::kFloat32 : DType::kFloat64;
  t.shape = shape;
  t.bytes.reserve(values.size() * sizeof(Real));
  using Bits = std::conditional_t<sizeof(Real) == 4, std::uint32_t, std::uint64_t>;
  for (Real v : values) {
    const auto bits = std::bit_cast<Bits>(v);
    for (std::size_t i = 0; i < sizeof(Real); ++i) t.bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  return t;
}

template <typename Real>
std::vector<Real> StoredTensor::values() const {
  const DType want = sizeof(Real) == 4 ? DType::kFloat32 : DType::kFloat64;
  if (dtype != want) throw InputError("checkpoint: tensor " + name + " has a different dtype");
  using Bits = std::conditional_t<sizeof(Real) == 4, std::uint32_t, std::uint64_t>;
  std::vector<Real> out(bytes.size() / sizeof(Real));
  for (std::size_t k = 0; k < out.size(); ++k) {
    Bits bits = 0;
    for (std::size_t i = 0; i < sizeof(Real); ++i) bits |= static_cast<Bits>(bytes[k * sizeof(Real) + i]) << (8 * i);
    out[k] = std::bit_cast<Real>(bits);
  }
  return out;
}

const StoredTensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw InputError("checkpoint: no tensor named " + name);
}

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

const std::string& Checkpoint::meta_value(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw InputError("checkpoint: missing metadata '" + key + "'");
  return it->second;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  Writer payload;
  payload.str32(checkpoint.config);
  payload.u32(static_cast<std::uint32_t>(checkpoint.meta.size()));
  for (const auto& [k, v] : checkpoint.meta) {
    payload.str16(k);
    payload.str32(v);
  }
  payload.u32(static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto& t : checkpoint.tensors) {
    if (t.bytes.size() != numel(t.shape) * dtype_size(t.dtype)) {
      throw DimensionError("checkpoint: byte count mismatch for " + t.name);
    }
    payload.str16(t.name);
    payload.u8(static_cast<std::uint8_t>(t.dtype));
    payload.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (auto e : t.shape) payload.u64(e);
    payload.raw(t.bytes.data(), t.bytes.size());
  }
  Writer file;
  file.raw(kMagic, 4);
  file.u16(kCheckpointVersion);
  auto& body = payload.bytes();
  file.raw(body.data(), body.size());
  file.u32(crc32_bytes(body.data(), body.size()));
  return std::move(file.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& source) {
  if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw InputError(source + ": not a CAMF checkpoint");
  }
  const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
  if (version != kCheckpointVersion) {
    throw InputError(source + ": unsupported version " + std::to_string(version) + " (this build reads " +
                     std::to_string(kCheckpointVersion) + ")");
  }
  const auto body = bytes.subspan(6, bytes.size() - 10);
  Reader crc_reader(bytes.subspan(bytes.size() - 4), source);
  const std::uint32_t stored = crc_reader.u32();
  if (crc32_bytes(body.data(), body.size()) != stored) {
    throw IntegrityError(source + ": checksum mismatch, file is corrupt");
  }
  Reader in(body, source);
  Checkpoint c;
  c.config = in.str32();
  const auto n_meta = in.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = in.str16();
    c.meta[k] = in.str32();
  }
  const auto n_tensors = in.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    StoredTensor t;
    t.name = in.str16();
    const auto tag = in.u8();
    if (tag != 1 && tag != 2) throw IntegrityError(source + ": unknown dtype tag for " + t.name);
    t.dtype = static_cast<DType>(tag);
    const auto rank = in.u8();
    for (int r = 0; r < rank; ++r) t.shape.push_back(static_cast<std::size_t>(in.u64()));
    const auto raw = in.raw(numel(t.shape) * dtype_size(t.dtype));
    t.bytes.assign(raw.begin(), raw.end());
    c.tensors.push_back(std::move(t));
  }
  if (!in.done()) throw IntegrityError(source + ": trailing bytes in payload");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto bytes = encode_checkpoint(checkpoint);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(path.string() + ": rename failed: " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open checkpoint");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

template <typename Real>
void store_params(Checkpoint& checkpoint, const ParamStore<Real>& params, const std::string& prefix) {
  for (const auto& [name, t] : params) {
    checkpoint.tensors.push_back(StoredTensor::from<Real>(prefix + name, t.values(), t.shape()));
  }
}

template <typename Real>
ParamStore<Real> restore_params(const Checkpoint& checkpoint, const std::string& prefix) {
  ParamStore<Real> store;
  for (const auto& t : checkpoint.tensors) {
    if (!t.name.starts_with(prefix)) continue;
    store.add(t.name.substr(prefix.size()), Tensor<Real>(t.shape, t.values<Real>(), true));
  }
  return store;
}

void store_adam(Checkpoint& checkpoint, const AdamState<float>& state) {
  checkpoint.meta["adam.step"] = std::to_string(state.step);
  for (const auto& [name, m] : state.first_moment) {
    checkpoint.tensors.push_back(StoredTensor::from<float>("adam.m/" + name, m, {m.size()}));
  }
  for (const auto& [name, v] : state.second_moment) {
    checkpoint.tensors.push_back(StoredTensor::from<float>("adam.v/" + name, v, {v.size()}));
  }
}

AdamState<float> restore_adam(const Checkpoint& checkpoint) {
  AdamState<float> state;
  state.step = std::stoll(checkpoint.meta_value("adam.step"));
  for (const auto& t : checkpoint.tensors) {
    if (t.name.starts_with("adam.m/")) state.first_moment[t.name.substr(7)] = t.values<float>();
    if (t.name.starts_with("adam.v/")) state.second_moment[t.name.substr(7)] = t.values<float>();
  }
  return state;
}

template StoredTensor StoredTensor::from<float>(const std::string&, std::span<const float>, const Shape&);
template StoredTensor StoredTensor::from<double>(const std::string&, std::span<const double>, const Shape&);
template std::vector<float> StoredTensor::values<float>() const;
template std::vector<double> StoredTensor::values<double>() const;
template void store_params(Checkpoint&, const ParamStore<float>&, const std::string&);
template void store_params(Checkpoint&, const ParamStore<double>&, const std::string&);
template ParamStore<float> restore_params(const Checkpoint&, const std::string&);
template ParamStore<double> restore_params(const Checkpoint&, const std::string&);

}  // namespace camo
