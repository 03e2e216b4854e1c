// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "genlip/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace genlip {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {
thread_local bool g_grad_enabled = true;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMatrix<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMatrix<T>>;

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_to_string(s));
  }
}

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
}

// Last dimension and number of slices along it.
std::pair<std::size_t, std::size_t> split_last(const Shape& s, const char* op) {
  if (s.empty() || s.back() == 0) {
    throw DimensionError(std::string(op) + ": empty last dimension in " + shape_to_string(s));
  }
  const std::size_t d = s.back();
  return {shape_numel(s) / d, d};
}

}  // namespace

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

// ---------------------------------------------------------------------------
// Tensor

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value, bool requires_grad) {
  return from_data(shape, std::vector<T>(shape_numel(shape), value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_data(const Shape& shape, std::vector<T> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor: shape " + shape_to_string(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = shape;
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw DimensionError("item: tensor " + shape_to_string(shape()) + " is not a scalar");
  }
  return node_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from_data(node_->shape, node_->data, false);
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const char* op,
                      std::vector<Tensor<T>> inputs, BackwardFn<T> backward) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  const bool track =
      GradMode::enabled() &&
      std::any_of(inputs.begin(), inputs.end(),
                  [](const Tensor<T>& t) { return t.defined() && t.requires_grad(); });
  if (track) {
    node->requires_grad = true;
    for (auto& in : inputs) {
      if (in.defined()) node->inputs.push_back(in.node());
    }
    node->backward = [fn = std::move(backward)](detail::Node<T>& self) {
      fn(self.grad, self.inputs);
    };
  }
  return Tensor<T>(std::move(node));
}

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_to_string(a.shape()) +
                         " x " + shape_to_string(b.shape()));
  }
  std::vector<T> out(m * n);
  MapMat<T>(out.data(), m, n).noalias() =
      MapConstMat<T>(a.data().data(), m, k) * MapConstMat<T>(b.data().data(), k, n);
  return make_result<T>(
      {m, n}, std::move(out), "matmul", {a, b},
      [m, k, n](std::span<const T> g, std::span<const typename Tensor<T>::NodePtr> in) {
        MapConstMat<T> dc(g.data(), m, n);
        if (T* ga = grad_target(in[0])) {
          MapMat<T>(ga, m, k).noalias() +=
              dc * MapConstMat<T>(in[1]->data.data(), k, n).transpose();
        }
        if (T* gb = grad_target(in[1])) {
          MapMat<T>(gb, k, n).noalias() +=
              MapConstMat<T>(in[0]->data.data(), m, k).transpose() * dc;
        }
      });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  auto y = matmul(x, w);
  return b.defined() ? add_rowvec(y, b) : y;
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "add");
  std::vector<T> out(a.numel());
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return make_result<T>(a.shape(), std::move(out), "add", {a, b},
                        [](std::span<const T> g, auto in) {
                          for (const auto& node : in) {
                            if (T* gx = grad_target(node)) {
                              for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "mul");
  std::vector<T> out(a.numel());
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return make_result<T>(a.shape(), std::move(out), "mul", {a, b},
                        [](std::span<const T> g, auto in) {
                          const auto& av = in[0]->data;
                          const auto& bv = in[1]->data;
                          if (T* ga = grad_target(in[0])) {
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                          }
                          if (T* gb = grad_target(in[1])) {
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                          }
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return make_result<T>(x.shape(), std::move(out), "scale", {x},
                        [factor](std::span<const T> g, auto in) {
                          if (T* gx = grad_target(in[0])) {
                            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
                          }
                        });
}

template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& b) {
  require_rank(x.shape(), 2, "add_rowvec");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (b.numel() != d) {
    throw DimensionError("add_rowvec: " + shape_to_string(x.shape()) + " + " +
                         shape_to_string(b.shape()));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += bd[j];
  }
  return make_result<T>(x.shape(), std::move(out), "add_rowvec", {x, b},
                        [n, d](std::span<const T> g, auto in) {
                          if (T* gx = grad_target(in[0])) {
                            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                          }
                          if (T* gb = grad_target(in[1])) {
                            for (std::size_t i = 0; i < n; ++i) {
                              for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> mul_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  require_rank(x.shape(), 2, "mul_rowvec");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (v.numel() != d) {
    throw DimensionError("mul_rowvec: " + shape_to_string(x.shape()) + " * " +
                         shape_to_string(v.shape()));
  }
  std::vector<T> out(x.numel());
  auto xd = x.data();
  auto vd = v.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xd[i * d + j] * vd[j];
  }
  return make_result<T>(x.shape(), std::move(out), "mul_rowvec", {x, v},
                        [n, d](std::span<const T> g, auto in) {
                          const auto& xv = in[0]->data;
                          const auto& vv = in[1]->data;
                          if (T* gx = grad_target(in[0])) {
                            for (std::size_t i = 0; i < n; ++i) {
                              for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[i * d + j] * vv[j];
                            }
                          }
                          if (T* gv = grad_target(in[1])) {
                            for (std::size_t i = 0; i < n; ++i) {
                              for (std::size_t j = 0; j < d; ++j) gv[j] += g[i * d + j] * xv[i * d + j];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> scale_rows(const Tensor<T>& x, std::span<const T> factors) {
  require_rank(x.shape(), 2, "scale_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (factors.size() != n) {
    throw DimensionError("scale_rows: " + std::to_string(factors.size()) +
                         " factors for " + shape_to_string(x.shape()));
  }
  std::vector<T> f(factors.begin(), factors.end());
  std::vector<T> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] *= f[i];
  }
  return make_result<T>(x.shape(), std::move(out), "scale_rows", {x},
                        [f = std::move(f), d](std::span<const T> g, auto in) {
                          if (T* gx = grad_target(in[0])) {
                            for (std::size_t i = 0; i < f.size(); ++i) {
                              for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[i * d + j] * f[i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Two branches keep exp() from overflowing for large |x|.
    const T v = xd[i];
    if (v >= 0) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
  }
  auto saved = out;
  return make_result<T>(x.shape(), std::move(out), "sigmoid", {x},
                        [s = std::move(saved)](std::span<const T> g, auto in) {
                          if (T* gx = grad_target(in[0])) {
                            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s[i] * (T(1) - s[i]);
                          }
                        });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  std::vector<T> sig(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = xd[i];
    sig[i] = v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
    out[i] = v * sig[i];
  }
  return make_result<T>(x.shape(), std::move(out), "silu", {x},
                        [sig = std::move(sig)](std::span<const T> g, auto in) {
                          if (T* gx = grad_target(in[0])) {
                            const auto& xv = in[0]->data;
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              gx[i] += g[i] * sig[i] * (T(1) + xv[i] * (T(1) - sig[i]));
                            }
                          }
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  return make_result<T>({}, {total}, "sum", {x}, [](std::span<const T> g, auto in) {
    if (T* gx = grad_target(in[0])) {
      for (std::size_t i = 0; i < in[0]->data.size(); ++i) gx[i] += g[0];
    }
  });
}

// ---------------------------------------------------------------------------
// Normalizations

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  const auto [rows, n] = split_last(x.shape(), "softmax_lastdim");
  std::vector<T> out(x.numel());
  auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xd.data() + r * n;
    T* o = out.data() + r * n;
    const T mx = *std::max_element(in, in + n);
    if (mx == -std::numeric_limits<T>::infinity()) {
      throw NumericError("softmax_lastdim: fully masked row " + std::to_string(r));
    }
    T total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  auto saved = out;
  return make_result<T>(x.shape(), std::move(out), "softmax", {x},
                        [p = std::move(saved), rows, n](std::span<const T> g, auto in) {
                          T* gx = grad_target(in[0]);
                          if (!gx) return;
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* pr = p.data() + r * n;
                            const T* gr = g.data() + r * n;
                            T dot = 0;
                            for (std::size_t j = 0; j < n; ++j) dot += pr[j] * gr[j];
                            for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += pr[j] * (gr[j] - dot);
                          }
                        });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const auto [rows, d] = split_last(x.shape(), "layer_norm");
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: affine " + shape_to_string(gamma.shape()) + "/" +
                         shape_to_string(beta.shape()) + " for width " + std::to_string(d));
  }
  if (!(eps > 0)) throw NumericError("layer_norm: eps must be positive");
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> rstd(rows);
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xd.data() + r * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += in[j];
    mean /= T(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= T(d);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (in[j] - mean) * rstd[r];
      xhat[r * d + j] = h;
      out[r * d + j] = h * gd[j] + bd[j];
    }
  }
  return make_result<T>(
      x.shape(), std::move(out), "layer_norm", {x, gamma, beta},
      [xhat = std::move(xhat), rstd = std::move(rstd), rows, d](std::span<const T> g, auto in) {
        const auto& gv = in[1]->data;
        if (T* gg = grad_target(in[1])) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
          }
        }
        if (T* gb = grad_target(in[2])) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
          }
        }
        if (T* gx = grad_target(in[0])) {
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_dh = 0, mean_dh_h = 0;
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = g[r * d + j] * gv[j];
              mean_dh += dh;
              mean_dh_h += dh * xhat[r * d + j];
            }
            mean_dh /= T(d);
            mean_dh_h /= T(d);
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = g[r * d + j] * gv[j];
              gx[r * d + j] += rstd[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Loss

template <typename T>
Tensor<T> cross_entropy_masked(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                               std::span<const std::uint8_t> loss_mask) {
  require_rank(logits.shape(), 2, "cross_entropy_masked");
  const std::size_t rows = logits.dim(0), v = logits.dim(1);
  if (targets.size() != rows || loss_mask.size() != rows) {
    throw DimensionError("cross_entropy_masked: " + std::to_string(targets.size()) +
                         " targets / " + std::to_string(loss_mask.size()) + " mask entries for " +
                         shape_to_string(logits.shape()));
  }
  std::vector<std::size_t> active;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!loss_mask[r]) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= v) {
      throw std::out_of_range("cross_entropy_masked: target " + std::to_string(targets[r]) +
                              " outside vocabulary of " + std::to_string(v));
    }
    active.push_back(r);
  }
  if (active.empty()) throw NumericError("cross_entropy_masked: no text targets");

  auto ld = logits.data();
  std::vector<T> probs(active.size() * v);
  std::vector<std::int32_t> tgt(active.size());
  T total = 0;
  for (std::size_t a = 0; a < active.size(); ++a) {
    const T* row = ld.data() + active[a] * v;
    T* p = probs.data() + a * v;
    const T mx = *std::max_element(row, row + v);
    T z = 0;
    for (std::size_t j = 0; j < v; ++j) {
      p[j] = std::exp(row[j] - mx);
      z += p[j];
    }
    for (std::size_t j = 0; j < v; ++j) p[j] /= z;
    tgt[a] = targets[active[a]];
    total += -(row[tgt[a]] - mx - std::log(z));
  }
  const T count = T(active.size());
  return make_result<T>(
      {}, {total / count}, "cross_entropy", {logits},
      [probs = std::move(probs), tgt = std::move(tgt), active = std::move(active), v,
       count](std::span<const T> g, auto in) {
        T* gl = grad_target(in[0]);
        if (!gl) return;
        const T s = g[0] / count;
        for (std::size_t a = 0; a < active.size(); ++a) {
          T* out = gl + active[a] * v;
          const T* p = probs.data() + a * v;
          for (std::size_t j = 0; j < v; ++j) out[j] += s * p[j];
          out[tgt[a]] -= s;
        }
      });
}

// ---------------------------------------------------------------------------
// Row plumbing

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids) {
  require_rank(table.shape(), 2, "embedding");
  const std::size_t v = table.dim(0), d = table.dim(1);
  std::vector<std::size_t> rows(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                              std::to_string(v));
    }
    rows[i] = static_cast<std::size_t>(ids[i]);
  }
  (void)d;
  return gather_rows(table, rows);
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> rows) {
  require_rank(x.shape(), 2, "gather_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<T> out(idx.size() * d);
  auto xd = x.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n) {
      throw std::out_of_range("gather_rows: row " + std::to_string(idx[i]) + " of " +
                              std::to_string(n));
    }
    std::copy_n(xd.data() + idx[i] * d, d, out.data() + i * d);
  }
  const std::size_t count = idx.size();
  return make_result<T>({count, d}, std::move(out), "gather_rows", {x},
                        [idx = std::move(idx), d](std::span<const T> g, auto in) {
                          T* gx = grad_target(in[0]);
                          if (!gx) return;
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                            T* dst = gx + idx[i] * d;
                            const T* src = g.data() + i * d;
                            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                          }
                        });
}

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "concat_rows");
  require_rank(b.shape(), 2, "concat_rows");
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("concat_rows: " + shape_to_string(a.shape()) + " with " +
                         shape_to_string(b.shape()));
  }
  const std::size_t na = a.numel();
  std::vector<T> out;
  out.reserve(na + b.numel());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  return make_result<T>({a.dim(0) + b.dim(0), a.dim(1)}, std::move(out), "concat_rows", {a, b},
                        [na](std::span<const T> g, auto in) {
                          if (T* ga = grad_target(in[0])) {
                            for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                          }
                          if (T* gb = grad_target(in[1])) {
                            for (std::size_t i = na; i < g.size(); ++i) gb[i - na] += g[i];
                          }
                        });
}

// ---------------------------------------------------------------------------
// Reverse pass

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw NumericError("backward: loss must be a scalar, got " + shape_to_string(loss.shape()));
  }
  if (!loss.requires_grad()) throw NumericError("backward: loss is not on the tape");

  using NodePtr = typename Tensor<T>::NodePtr;
  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> seen;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const NodePtr& child = node->inputs[next++];
      if (child->requires_grad && seen.insert(child.get()).second) {
        stack.emplace_back(child.get(), 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (auto* node : order) {
    if (!node->is_leaf()) node->grad.clear();
  }
  loss.node()->grad_buffer()[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* node = *it;
    if (node->is_leaf() || node->grad.empty() || !node->backward) continue;
    node->backward(*node);
  }
}

// ---------------------------------------------------------------------------

#define GENLIP_INSTANTIATE(T)                                                              \
  template class Tensor<T>;                                                                \
  template Tensor<T> make_result<T>(Shape, std::vector<T>, const char*,                    \
                                    std::vector<Tensor<T>>, BackwardFn<T>);                \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> scale(const Tensor<T>&, T);                                           \
  template Tensor<T> add_rowvec(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> mul_rowvec(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> scale_rows(const Tensor<T>&, std::span<const T>);                     \
  template Tensor<T> sigmoid(const Tensor<T>&);                                            \
  template Tensor<T> silu(const Tensor<T>&);                                               \
  template Tensor<T> sum(const Tensor<T>&);                                                \
  template Tensor<T> softmax_lastdim(const Tensor<T>&);                                    \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);  \
  template Tensor<T> cross_entropy_masked(const Tensor<T>&, std::span<const std::int32_t>, \
                                          std::span<const std::uint8_t>);                  \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const std::int32_t>);           \
  template Tensor<T> concat_rows(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);          \
  template void backward(const Tensor<T>&);

GENLIP_INSTANTIATE(float)
GENLIP_INSTANTIATE(double)

#undef GENLIP_INSTANTIATE

}  // namespace genlip
