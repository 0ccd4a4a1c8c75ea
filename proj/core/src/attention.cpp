#include "camo/attention.hpp"

#include <cmath>

#include "camo/errors.hpp"
#include "camo/ops.hpp"

namespace camo {

void AttentionDims::validate() const {
  if (heads == 0) throw ConfigError("attention: head count must be at least 1");
  if (query_dim == 0 || key_dim == 0 || value_dim == 0 || model_dim == 0 || out_dim == 0) {
    throw ConfigError("attention: all dims must be positive");
  }
  if (model_dim % heads != 0) {
    throw ConfigError("attention: model dim " + std::to_string(model_dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

template <typename Real>
AttentionWeights<Real> AttentionWeights<Real>::from(const ParamStore<Real>& store, const std::string& prefix) {
  return {store.get(prefix + ".wq"), store.get(prefix + ".wk"), store.get(prefix + ".wv"), store.get(prefix + ".wo")};
}

template <typename Real>
void init_attention(ParamStore<Real>& store, const std::string& prefix, const AttentionDims& dims, Rng& rng) {
  dims.validate();
  Rng r = rng.split(prefix);
  store.add(prefix + ".wq", glorot_uniform<Real>({dims.query_dim, dims.model_dim}, dims.query_dim, dims.model_dim, r));
  store.add(prefix + ".wk", glorot_uniform<Real>({dims.key_dim, dims.model_dim}, dims.key_dim, dims.model_dim, r));
  store.add(prefix + ".wv", glorot_uniform<Real>({dims.value_dim, dims.model_dim}, dims.value_dim, dims.model_dim, r));
  store.add(prefix + ".wo", glorot_uniform<Real>({dims.model_dim, dims.out_dim}, dims.model_dim, dims.out_dim, r));
}

template <typename Real>
Tensor<Real> multi_head_attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v,
                                  const AttentionWeights<Real>& w, std::size_t heads,
                                  std::vector<Tensor<Real>>* attention) {
  if (heads == 0) throw ConfigError("attention: head count must be at least 1");
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || k.dim(0) != v.dim(0)) {
    throw DimensionError("attention: q " + shape_string(q.shape()) + ", k " + shape_string(k.shape()) + ", v " +
                         shape_string(v.shape()));
  }
  if (w.wq.dim(0) != q.dim(1) || w.wk.dim(0) != k.dim(1) || w.wv.dim(0) != v.dim(1)) {
    throw ConfigError("attention: projection input dims do not match q/k/v widths");
  }
  const auto model_dim = w.wq.dim(1);
  if (w.wk.dim(1) != model_dim || w.wv.dim(1) != model_dim || w.wo.dim(0) != model_dim) {
    throw ConfigError("attention: projections disagree on model dim");
  }
  if (model_dim % heads != 0) {
    throw ConfigError("attention: model dim " + std::to_string(model_dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const auto head_dim = model_dim / heads;
  const Real inv_sqrt = Real(1) / std::sqrt(static_cast<Real>(head_dim));

  const auto qp = matmul(q, w.wq);
  const auto kp = matmul(k, w.wk);
  const auto vp = matmul(v, w.wv);
  if (attention) attention->clear();

  Tensor<Real> concat;
  for (std::size_t h = 0; h < heads; ++h) {
    const auto qh = heads == 1 ? qp : slice_last(qp, h * head_dim, head_dim);
    const auto kh = heads == 1 ? kp : slice_last(kp, h * head_dim, head_dim);
    const auto vh = heads == 1 ? vp : slice_last(vp, h * head_dim, head_dim);
    const auto probs = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt));
    if (attention) attention->push_back(probs);
    const auto out = matmul(probs, vh);
    concat = h == 0 ? out : concat_last(concat, out);
  }
  return matmul(concat, w.wo);
}

template <typename Real>
void init_linear(ParamStore<Real>& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                 bool bias) {
  Rng r = rng.split(prefix);
  store.add(prefix + ".w", glorot_uniform<Real>({in, out}, in, out, r));
  if (bias) store.add(prefix + ".b", Tensor<Real>::zeros({out}, true));
}

template <typename Real>
void init_layer_norm(ParamStore<Real>& store, const std::string& prefix, std::size_t dim) {
  store.add(prefix + ".gain", Tensor<Real>::full({dim}, Real(1), true));
  store.add(prefix + ".bias", Tensor<Real>::zeros({dim}, true));
}

template <typename Real>
Tensor<Real> apply_linear(const ParamStore<Real>& store, const std::string& prefix, const Tensor<Real>& x) {
  const auto bias_name = prefix + ".b";
  return linear(x, store.get(prefix + ".w"), store.contains(bias_name) ? store.get(bias_name) : Tensor<Real>{});
}

template <typename Real>
Tensor<Real> apply_layer_norm(const ParamStore<Real>& store, const std::string& prefix, const Tensor<Real>& x) {
  return layer_norm(x, store.get(prefix + ".gain"), store.get(prefix + ".bias"), Real(1e-5));
}

#define CAMO_INSTANTIATE_ATTN(R)                                                                            \
  template struct AttentionWeights<R>;                                                                      \
  template void init_attention(ParamStore<R>&, const std::string&, const AttentionDims&, Rng&);             \
  template Tensor<R> multi_head_attention(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&,             \
                                          const AttentionWeights<R>&, std::size_t, std::vector<Tensor<R>>*); \
  template void init_linear(ParamStore<R>&, const std::string&, std::size_t, std::size_t, Rng&, bool);      \
  template void init_layer_norm(ParamStore<R>&, const std::string&, std::size_t);                           \
  template Tensor<R> apply_linear(const ParamStore<R>&, const std::string&, const Tensor<R>&);              \
  template Tensor<R> apply_layer_norm(const ParamStore<R>&, const std::string&, const Tensor<R>&);

CAMO_INSTANTIATE_ATTN(float)
CAMO_INSTANTIATE_ATTN(double)

}  // namespace camo
