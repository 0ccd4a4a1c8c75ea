#include "camo/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "camo/errors.hpp"

namespace camo {

namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MatMap = Eigen::Map<RowMat<Real>>;
template <typename Real>
using ConstMatMap = Eigen::Map<const RowMat<Real>>;

template <typename Real>
using Node = TensorNode<Real>;

template <typename Real>
Node<Real>& parent(Node<Real>& self, std::size_t i) {
  return *self.parents[i];
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Which operand (if any) is broadcast. Returns the result shape.
enum class Bcast { kNone, kA, kB };

Bcast broadcast_kind(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Bcast::kNone;
  const auto na = numel(a), nb = numel(b);
  if (nb == 1 && na >= 1) return Bcast::kB;
  if (na == 1) return Bcast::kA;
  if (is_suffix(b, a)) return Bcast::kB;
  if (is_suffix(a, b)) return Bcast::kA;
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(a) + " with " +
                       shape_string(b));
}

// f(x, y) forward; da(g, x, y), db(g, x, y) partials.
template <typename Real, typename F, typename DA, typename DB>
Tensor<Real> binary(const Tensor<Real>& a, const Tensor<Real>& b, const char* op, F f, DA da, DB db) {
  const auto kind = broadcast_kind(a.shape(), b.shape(), op);
  const Shape out_shape = kind == Bcast::kA ? b.shape() : a.shape();
  const std::size_t n = numel(out_shape);
  const std::size_t na = a.size(), nb = b.size();
  auto av = a.values();
  auto bv = b.values();
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i % na], bv[i % nb]);
  return Tensor<Real>::from_op(out_shape, std::move(out), {a, b}, [n, na, nb, da, db](Node<Real>& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    const auto& g = self.grad;
    if (pa.requires_grad) {
      auto& ga = pa.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) ga[i % na] += da(g[i], pa.value[i % na], pb.value[i % nb]);
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gb[i % nb] += db(g[i], pa.value[i % na], pb.value[i % nb]);
    }
  });
}

template <typename Real, typename F, typename D>
Tensor<Real> unary(const Tensor<Real>& a, F f, D d) {
  const auto n = a.size();
  auto av = a.values();
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i]);
  return Tensor<Real>::from_op(a.shape(), std::move(out), {a}, [n, d](Node<Real>& self) {
    auto& pa = parent(self, 0);
    auto& ga = pa.grad_buffer();
    for (std::size_t i = 0; i < n; ++i) ga[i] += d(self.grad[i], pa.value[i]);
  });
}

}  // namespace

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary(
      a, b, "add", [](Real x, Real y) { return x + y; }, [](Real g, Real, Real) { return g; },
      [](Real g, Real, Real) { return g; });
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary(
      a, b, "sub", [](Real x, Real y) { return x - y; }, [](Real g, Real, Real) { return g; },
      [](Real g, Real, Real) { return -g; });
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary(
      a, b, "mul", [](Real x, Real y) { return x * y; }, [](Real g, Real, Real y) { return g * y; },
      [](Real g, Real x, Real) { return g * x; });
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor) {
  return unary(
      a, [factor](Real x) { return x * factor; }, [factor](Real g, Real) { return g * factor; });
}

template <typename Real>
Tensor<Real> add_scalar(const Tensor<Real>& a, Real offset) {
  return unary(
      a, [offset](Real x) { return x + offset; }, [](Real g, Real) { return g; });
}

template <typename Real>
Tensor<Real> square(const Tensor<Real>& a) {
  return unary(
      a, [](Real x) { return x * x; }, [](Real g, Real x) { return Real(2) * x * g; });
}

template <typename Real>
Tensor<Real> silu(const Tensor<Real>& a) {
  return unary(
      a, [](Real x) { return x / (Real(1) + std::exp(-x)); },
      [](Real g, Real x) {
        const Real s = Real(1) / (Real(1) + std::exp(-x));
        return g * s * (Real(1) + x * (Real(1) - s));
      });
}

template <typename Real>
Tensor<Real> masked(const Tensor<Real>& a, const std::vector<Real>& mask) {
  if (mask.size() != a.size()) {
    throw DimensionError("masked: mask of " + std::to_string(mask.size()) + " values for tensor " +
                         shape_string(a.shape()));
  }
  const auto n = a.size();
  auto av = a.values();
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * mask[i];
  return Tensor<Real>::from_op(a.shape(), std::move(out), {a}, [mask](Node<Real>& self) {
    auto& ga = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * mask[i];
  });
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& a) {
  Real total = 0;
  for (Real v : a.values()) total += v;
  return Tensor<Real>::from_op({}, {total}, {a}, [](Node<Real>& self) {
    auto& ga = parent(self, 0).grad_buffer();
    for (auto& g : ga) g += self.grad[0];
  });
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& a) {
  return scale(sum(a), Real(1) / static_cast<Real>(a.size()));
}

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<Real> out(m * n);
  MatMap<Real>(out.data(), m, n).noalias() =
      ConstMatMap<Real>(a.values().data(), m, k) * ConstMatMap<Real>(b.values().data(), k, n);
  return Tensor<Real>::from_op({m, n}, std::move(out), {a, b}, [m, k, n](Node<Real>& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    ConstMatMap<Real> g(self.grad.data(), m, n);
    if (pa.requires_grad) {
      MatMap<Real>(pa.grad_buffer().data(), m, k).noalias() +=
          g * ConstMatMap<Real>(pb.value.data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      MatMap<Real>(pb.grad_buffer().data(), k, n).noalias() +=
          ConstMatMap<Real>(pa.value.data(), m, k).transpose() * g;
    }
  });
}

template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_string(a.shape()));
  const auto rows = a.dim(0), cols = a.dim(1);
  std::vector<std::size_t> idx(rows * cols);
  for (std::size_t c = 0; c < cols; ++c)
    for (std::size_t r = 0; r < rows; ++r) idx[c * rows + r] = r * cols + c;
  return take(a, std::move(idx), {cols, rows});
}

template <typename Real>
void require_finite(const Tensor<Real>& t, const char* what) {
  for (Real v : t.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite value");
  }
}

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x) {
  if (x.rank() == 0) throw DimensionError("softmax: needs at least one axis");
  require_finite(x, "softmax input");
  const auto cols = x.shape().back();
  const auto rows = x.size() / cols;
  auto xv = x.values();
  std::vector<Real> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = xv.data() + r * cols;
    Real* o = out.data() + r * cols;
    const Real mx = *std::max_element(in, in + cols);
    Real total = 0;
    for (std::size_t c = 0; c < cols; ++c) total += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  auto y = out;
  return Tensor<Real>::from_op(x.shape(), std::move(out), {x}, [rows, cols, y = std::move(y)](Node<Real>& self) {
    auto& gx = parent(self, 0).grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* yr = y.data() + r * cols;
      const Real* gr = self.grad.data() + r * cols;
      Real dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * yr[c];
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += yr[c] * (gr[c] - dot);
    }
  });
}

template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias, Real eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm: needs at least one axis");
  const auto cols = x.shape().back();
  if (gain.size() != cols || bias.size() != cols) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" +
                         shape_string(bias.shape()) + " for input " + shape_string(x.shape()));
  }
  if (!(eps > 0)) throw ConfigError("layer_norm: eps must be positive");
  const auto rows = x.size() / cols;
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  std::vector<Real> xhat(x.size()), inv_std(rows), out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = xv.data() + r * cols;
    Real mu = 0;
    for (std::size_t c = 0; c < cols; ++c) mu += in[c];
    mu /= static_cast<Real>(cols);
    Real var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<Real>(cols);
    inv_std[r] = Real(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      xhat[r * cols + c] = (in[c] - mu) * inv_std[r];
      out[r * cols + c] = xhat[r * cols + c] * gv[c] + bv[c];
    }
  }
  return Tensor<Real>::from_op(
      x.shape(), std::move(out), {x, gain, bias},
      [rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<Real>& self) {
        auto& px = parent(self, 0);
        auto& pg = parent(self, 1);
        auto& pb = parent(self, 2);
        const auto& g = self.grad;
        if (pg.requires_grad || pb.requires_grad) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
              if (pg.requires_grad) pg.grad_buffer()[c] += g[r * cols + c] * xhat[r * cols + c];
              if (pb.requires_grad) pb.grad_buffer()[c] += g[r * cols + c];
            }
        }
        if (px.requires_grad) {
          auto& gx = px.grad_buffer();
          std::vector<Real> dxhat(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            Real m1 = 0, m2 = 0;
            for (std::size_t c = 0; c < cols; ++c) {
              dxhat[c] = g[r * cols + c] * pg.value[c];
              m1 += dxhat[c];
              m2 += dxhat[c] * xhat[r * cols + c];
            }
            m1 /= static_cast<Real>(cols);
            m2 /= static_cast<Real>(cols);
            for (std::size_t c = 0; c < cols; ++c)
              gx[r * cols + c] += inv_std[r] * (dxhat[c] - m1 - xhat[r * cols + c] * m2);
          }
        }
      });
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
  }
  auto v = a.values();
  return Tensor<Real>::from_op(std::move(shape), std::vector<Real>(v.begin(), v.end()), {a},
                               [](Node<Real>& self) {
                                 auto& ga = parent(self, 0).grad_buffer();
                                 for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
                               });
}

template <typename Real>
Tensor<Real> take(const Tensor<Real>& a, std::vector<std::size_t> indices, Shape out_shape) {
  if (numel(out_shape) != indices.size()) {
    throw DimensionError("take: " + std::to_string(indices.size()) + " indices for shape " +
                         shape_string(out_shape));
  }
  const auto n = a.size();
  auto av = a.values();
  std::vector<Real> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= n) throw DimensionError("take: index out of range for " + shape_string(a.shape()));
    out[i] = av[indices[i]];
  }
  return Tensor<Real>::from_op(std::move(out_shape), std::move(out), {a},
                               [idx = std::move(indices)](Node<Real>& self) {
                                 auto& ga = parent(self, 0).grad_buffer();
                                 for (std::size_t i = 0; i < idx.size(); ++i) ga[idx[i]] += self.grad[i];
                               });
}

template <typename Real>
Tensor<Real> concat_last(const Tensor<Real>& a, const Tensor<Real>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.empty() || sa.size() != sb.size() || !std::equal(sa.begin(), sa.end() - 1, sb.begin())) {
    throw DimensionError("concat_last: " + shape_string(sa) + " with " + shape_string(sb));
  }
  const auto ca = sa.back(), cb = sb.back(), rows = a.size() / ca;
  Shape out_shape = sa;
  out_shape.back() = ca + cb;
  auto av = a.values();
  auto bv = b.values();
  std::vector<Real> out(rows * (ca + cb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(bv.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  return Tensor<Real>::from_op(std::move(out_shape), std::move(out), {a, b}, [rows, ca, cb](Node<Real>& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    const auto w = ca + cb;
    if (pa.requires_grad) {
      auto& ga = pa.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ca; ++c) ga[r * ca + c] += self.grad[r * w + c];
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cb; ++c) gb[r * cb + c] += self.grad[r * w + ca + c];
    }
  });
}

template <typename Real>
Tensor<Real> stack(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw DimensionError("stack: no tensors");
  const Shape& s0 = parts.front().shape();
  for (const auto& p : parts) {
    if (p.shape() != s0) throw DimensionError("stack: " + shape_string(s0) + " with " + shape_string(p.shape()));
  }
  const auto each = numel(s0);
  std::vector<Real> out;
  out.reserve(each * parts.size());
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  Shape out_shape{parts.size()};
  out_shape.insert(out_shape.end(), s0.begin(), s0.end());
  return Tensor<Real>::from_op(std::move(out_shape), std::move(out), parts, [each](Node<Real>& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& gp = p.grad_buffer();
      for (std::size_t i = 0; i < each; ++i) gp[i] += self.grad[k * each + i];
    }
  });
}

template <typename Real>
Tensor<Real> gather_rows(const Tensor<Real>& table, const std::vector<std::size_t>& rows) {
  if (table.rank() != 2) throw DimensionError("gather_rows: table must be rank 2, got " + shape_string(table.shape()));
  const auto k = table.dim(0), d = table.dim(1);
  std::vector<std::size_t> idx;
  idx.reserve(rows.size() * d);
  for (auto r : rows) {
    if (r >= k) throw DimensionError("gather_rows: row " + std::to_string(r) + " of " + std::to_string(k));
    for (std::size_t c = 0; c < d; ++c) idx.push_back(r * d + c);
  }
  return take(table, std::move(idx), {rows.size(), d});
}

template <typename Real>
Tensor<Real> straight_through(const Tensor<Real>& source, const Tensor<Real>& replacement) {
  if (source.shape() != replacement.shape()) {
    throw DimensionError("straight_through: " + shape_string(source.shape()) + " vs " +
                         shape_string(replacement.shape()));
  }
  auto rv = replacement.values();
  return Tensor<Real>::from_op(source.shape(), std::vector<Real>(rv.begin(), rv.end()), {source},
                               [](Node<Real>& self) {
                                 auto& gs = parent(self, 0).grad_buffer();
                                 for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += self.grad[i];
                               });
}

template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b) {
  if (x.rank() == 0 || w.rank() != 2 || x.shape().back() != w.dim(0)) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " with weight " + shape_string(w.shape()));
  }
  const auto in = w.dim(0), out = w.dim(1);
  Shape out_shape = x.shape();
  out_shape.back() = out;
  auto y = matmul(reshape(x, {x.size() / in, in}), w);
  y = reshape(y, out_shape);
  return b.defined() ? add(y, b) : y;
}

template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b, std::size_t kernel,
                    std::size_t stride) {
  if (x.rank() != 4) throw DimensionError("conv2d: input must be [B,H,W,C], got " + shape_string(x.shape()));
  const auto batch = x.dim(0), height = x.dim(1), width = x.dim(2), cin = x.dim(3);
  if (kernel == 0 || stride == 0 || w.rank() != 2 || w.dim(0) != kernel * kernel * cin) {
    throw DimensionError("conv2d: weight " + shape_string(w.shape()) + " for input " + shape_string(x.shape()) +
                         " and kernel " + std::to_string(kernel));
  }
  const auto cout = w.dim(1);
  if (b.defined() && b.size() != cout) throw DimensionError("conv2d: bias " + shape_string(b.shape()));
  const auto pad = kernel / 2;
  if (height + 2 * pad < kernel || width + 2 * pad < kernel) throw DimensionError("conv2d: input smaller than kernel");
  const auto oh = (height + 2 * pad - kernel) / stride + 1;
  const auto ow = (width + 2 * pad - kernel) / stride + 1;
  const auto rows = batch * oh * ow;
  const auto kcols = kernel * kernel * cin;

  auto xv = x.values();
  std::vector<Real> cols(rows * kcols, Real(0));
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        Real* row = cols.data() + ((n * oh + oy) * ow + ox) * kcols;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
            std::copy_n(xv.data() + ((n * height + iy) * width + ix) * cin, cin, row + (ky * kernel + kx) * cin);
          }
        }
      }

  std::vector<Real> out(rows * cout);
  MatMap<Real> om(out.data(), rows, cout);
  om.noalias() = ConstMatMap<Real>(cols.data(), rows, kcols) * ConstMatMap<Real>(w.values().data(), kcols, cout);
  if (b.defined()) {
    auto bv = b.values();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cout; ++c) out[r * cout + c] += bv[c];
  }

  std::vector<Tensor<Real>> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return Tensor<Real>::from_op(
      {batch, oh, ow, cout}, std::move(out), std::move(parents),
      [=, cols = std::move(cols)](Node<Real>& self) {
        auto& px = parent(self, 0);
        auto& pw = parent(self, 1);
        ConstMatMap<Real> g(self.grad.data(), rows, cout);
        if (pw.requires_grad) {
          MatMap<Real>(pw.grad_buffer().data(), kcols, cout).noalias() +=
              ConstMatMap<Real>(cols.data(), rows, kcols).transpose() * g;
        }
        if (self.parents.size() > 2 && parent(self, 2).requires_grad) {
          auto& gb = parent(self, 2).grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cout; ++c) gb[c] += self.grad[r * cout + c];
        }
        if (px.requires_grad) {
          RowMat<Real> dcols = g * ConstMatMap<Real>(pw.value.data(), kcols, cout).transpose();
          auto& gx = px.grad_buffer();
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t oy = 0; oy < oh; ++oy)
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const Real* row = dcols.data() + ((n * oh + oy) * ow + ox) * kcols;
                for (std::size_t ky = 0; ky < kernel; ++ky) {
                  const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                  if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
                  for (std::size_t kx = 0; kx < kernel; ++kx) {
                    const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
                    Real* dst = gx.data() + ((n * height + iy) * width + ix) * cin;
                    const Real* src = row + (ky * kernel + kx) * cin;
                    for (std::size_t c = 0; c < cin; ++c) dst[c] += src[c];
                  }
                }
              }
        }
      });
}

template <typename Real>
Tensor<Real> upsample_nearest(const Tensor<Real>& x, std::size_t factor) {
  if (x.rank() != 3 && x.rank() != 4) {
    throw DimensionError("upsample_nearest: expected [H,W,C] or [B,H,W,C], got " + shape_string(x.shape()));
  }
  if (factor == 0) throw ConfigError("upsample_nearest: factor must be positive");
  const bool batched = x.rank() == 4;
  const auto batch = batched ? x.dim(0) : 1;
  const auto off = batched ? 1 : 0;
  const auto h = x.dim(off), w = x.dim(off + 1), c = x.dim(off + 2);
  const auto oh = h * factor, ow = w * factor;
  std::vector<std::size_t> idx;
  idx.reserve(batch * oh * ow * c);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx)
        for (std::size_t k = 0; k < c; ++k) idx.push_back(((n * h + y / factor) * w + xx / factor) * c + k);
  Shape out = batched ? Shape{batch, oh, ow, c} : Shape{oh, ow, c};
  return take(x, std::move(idx), std::move(out));
}

template <typename Real>
Tensor<Real> slice_last(const Tensor<Real>& x, std::size_t begin, std::size_t count) {
  if (x.rank() == 0 || count == 0 || begin + count > x.shape().back()) {
    throw DimensionError("slice_last: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") of " +
                         shape_string(x.shape()));
  }
  const auto cols = x.shape().back();
  const auto rows = x.size() / cols;
  std::vector<std::size_t> idx;
  idx.reserve(rows * count);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) idx.push_back(r * cols + begin + c);
  Shape out = x.shape();
  out.back() = count;
  return take(x, std::move(idx), std::move(out));
}

template <typename Real>
Tensor<Real> broadcast_spatial(const Tensor<Real>& x, std::size_t height, std::size_t width) {
  if (x.rank() != 2) throw DimensionError("broadcast_spatial: expected [B,C], got " + shape_string(x.shape()));
  const auto batch = x.dim(0), c = x.dim(1);
  std::vector<std::size_t> idx;
  idx.reserve(batch * height * width * c);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t p = 0; p < height * width; ++p)
      for (std::size_t k = 0; k < c; ++k) idx.push_back(n * c + k);
  return take(x, std::move(idx), {batch, height, width, c});
}

#define CAMO_INSTANTIATE_OPS(R)                                                                          \
  template Tensor<R> add(const Tensor<R>&, const Tensor<R>&);                                             \
  template Tensor<R> sub(const Tensor<R>&, const Tensor<R>&);                                             \
  template Tensor<R> mul(const Tensor<R>&, const Tensor<R>&);                                             \
  template Tensor<R> scale(const Tensor<R>&, R);                                                          \
  template Tensor<R> add_scalar(const Tensor<R>&, R);                                                     \
  template Tensor<R> square(const Tensor<R>&);                                                            \
  template Tensor<R> silu(const Tensor<R>&);                                                              \
  template Tensor<R> masked(const Tensor<R>&, const std::vector<R>&);                                     \
  template Tensor<R> sum(const Tensor<R>&);                                                               \
  template Tensor<R> mean(const Tensor<R>&);                                                              \
  template Tensor<R> matmul(const Tensor<R>&, const Tensor<R>&);                                          \
  template Tensor<R> transpose(const Tensor<R>&);                                                         \
  template Tensor<R> softmax(const Tensor<R>&);                                                           \
  template Tensor<R> layer_norm(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&, R);                 \
  template Tensor<R> reshape(const Tensor<R>&, Shape);                                                    \
  template Tensor<R> take(const Tensor<R>&, std::vector<std::size_t>, Shape);                             \
  template Tensor<R> concat_last(const Tensor<R>&, const Tensor<R>&);                                     \
  template Tensor<R> stack(const std::vector<Tensor<R>>&);                                                \
  template Tensor<R> gather_rows(const Tensor<R>&, const std::vector<std::size_t>&);                      \
  template Tensor<R> straight_through(const Tensor<R>&, const Tensor<R>&);                                \
  template Tensor<R> linear(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&);                        \
  template Tensor<R> conv2d(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&, std::size_t, std::size_t); \
  template Tensor<R> upsample_nearest(const Tensor<R>&, std::size_t);                                     \
  template Tensor<R> slice_last(const Tensor<R>&, std::size_t, std::size_t);                              \
  template Tensor<R> broadcast_spatial(const Tensor<R>&, std::size_t, std::size_t);                       \
  template void require_finite(const Tensor<R>&, const char*);

CAMO_INSTANTIATE_OPS(float)
CAMO_INSTANTIATE_OPS(double)

}  // namespace camo
