#pragma once

#include <string>
#include <vector>

#include "camo/param_store.hpp"

namespace camo {

struct AttentionDims {
  std::size_t query_dim = 0;
  std::size_t key_dim = 0;
  std::size_t value_dim = 0;
  std::size_t model_dim = 0;  // concatenated head width
  std::size_t out_dim = 0;
  std::size_t heads = 1;

  void validate() const;
};

template <typename Real>
struct AttentionWeights {
  Tensor<Real> wq;  // [query_dim, model_dim]
  Tensor<Real> wk;  // [key_dim, model_dim]
  Tensor<Real> wv;  // [value_dim, model_dim]
  Tensor<Real> wo;  // [model_dim, out_dim]

  static AttentionWeights from(const ParamStore<Real>& store, const std::string& prefix);
};

/// Registers `<prefix>.wq/.wk/.wv/.wo` with Glorot-uniform values.
template <typename Real>
void init_attention(ParamStore<Real>& store, const std::string& prefix, const AttentionDims& dims, Rng& rng);

/// Concat_h(softmax((q Wq_h)(k Wk_h)^T / sqrt(d_head)) v Wv_h) Wo.
///
/// Head h uses columns [h*d_head, (h+1)*d_head) of the projections. When
/// `attention` is given it receives one [Nq, Nk] probability matrix per head.
template <typename Real>
Tensor<Real> multi_head_attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v,
                                  const AttentionWeights<Real>& weights, std::size_t heads,
                                  std::vector<Tensor<Real>>* attention = nullptr);

/// `<prefix>.w` [in, out] Glorot-uniform and, optionally, `<prefix>.b` zeros.
template <typename Real>
void init_linear(ParamStore<Real>& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                 bool bias = true);

/// `<prefix>.gain` ones and `<prefix>.bias` zeros.
template <typename Real>
void init_layer_norm(ParamStore<Real>& store, const std::string& prefix, std::size_t dim);

template <typename Real>
Tensor<Real> apply_linear(const ParamStore<Real>& store, const std::string& prefix, const Tensor<Real>& x);

template <typename Real>
Tensor<Real> apply_layer_norm(const ParamStore<Real>& store, const std::string& prefix, const Tensor<Real>& x);

}  // namespace camo
