// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "genlip/attention.hpp"

#include <cmath>
#include <limits>

#include "genlip/errors.hpp"

namespace genlip {

namespace {

template <typename T>
void rotate(const T* in, T* out, std::size_t n, std::size_t d, std::size_t heads,
            const std::vector<T>& cos_t, const std::vector<T>& sin_t, bool inverse) {
  const std::size_t hd = d / heads;
  const std::size_t half = hd / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const T* c = cos_t.data() + i * half;
    const T* s = sin_t.data() + i * half;
    for (std::size_t h = 0; h < heads; ++h) {
      const T* x = in + i * d + h * hd;
      T* y = out + i * d + h * hd;
      for (std::size_t j = 0; j < half; ++j) {
        const T sj = inverse ? -s[j] : s[j];
        const T a = x[j], b = x[j + half];
        y[j] += a * c[j] - b * sj;
        y[j + half] += a * sj + b * c[j];
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> apply_mrope(const Tensor<T>& x, std::size_t heads,
                      std::span<const PositionTriple> positions, const MropeSections& sections,
                      double theta) {
  if (x.rank() != 2 || heads == 0 || x.dim(1) % heads != 0) {
    throw DimensionError("apply_mrope: " + shape_to_string(x.shape()) + " with " +
                         std::to_string(heads) + " heads");
  }
  const std::size_t n = x.dim(0), d = x.dim(1), hd = d / heads, half = hd / 2;
  if (hd % 2 != 0 || sections[0] + sections[1] + sections[2] != half) {
    throw ConfigError("apply_mrope: sections (" + std::to_string(sections[0]) + "," +
                      std::to_string(sections[1]) + "," + std::to_string(sections[2]) +
                      ") must sum to head_dim/2 = " + std::to_string(half));
  }
  if (positions.size() != n) {
    throw DimensionError("apply_mrope: " + std::to_string(positions.size()) + " positions for " +
                         std::to_string(n) + " tokens");
  }
  std::vector<T> cos_t(n * half), sin_t(n * half);
  for (std::size_t i = 0; i < n; ++i) {
    const PositionTriple& p = positions[i];
    for (std::size_t j = 0; j < half; ++j) {
      const std::int32_t coord = j < sections[0]                 ? p.t
                                 : j < sections[0] + sections[1] ? p.h
                                                                 : p.w;
      const double inv_freq = std::pow(theta, -2.0 * static_cast<double>(j) / hd);
      const double angle = coord * inv_freq;
      cos_t[i * half + j] = static_cast<T>(std::cos(angle));
      sin_t[i * half + j] = static_cast<T>(std::sin(angle));
    }
  }
  std::vector<T> out(x.numel(), T(0));
  rotate(x.data().data(), out.data(), n, d, heads, cos_t, sin_t, false);
  return make_result<T>(x.shape(), std::move(out), "mrope", {x},
                        [cos_t = std::move(cos_t), sin_t = std::move(sin_t), n, d, heads](
                            std::span<const T> g, auto in) {
                          if (T* gx = grad_target(in[0])) {
                            rotate(g.data(), gx, n, d, heads, cos_t, sin_t, true);
                          }
                        });
}

template <typename T>
Tensor<T> masked_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           std::size_t heads, const AttentionMask& mask, AttentionProbs* probs) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || k.shape() != v.shape() ||
      q.dim(1) != k.dim(1) || heads == 0 || q.dim(1) % heads != 0) {
    throw DimensionError("masked_attention: q " + shape_to_string(q.shape()) + ", k " +
                         shape_to_string(k.shape()) + ", v " + shape_to_string(v.shape()));
  }
  const std::size_t nq = q.dim(0), nk = k.dim(0), d = q.dim(1), hd = d / heads;
  if (mask.rows != nq || mask.cols != nk) {
    throw DimensionError("masked_attention: mask " + std::to_string(mask.rows) + "x" +
                         std::to_string(mask.cols) + " for " + std::to_string(nq) + " queries and " +
                         std::to_string(nk) + " keys");
  }
  // Allowed keys per query row (CSR), shared by all heads.
  std::vector<std::size_t> row_start(nq + 1, 0);
  std::vector<std::uint32_t> cols;
  for (std::size_t i = 0; i < nq; ++i) {
    for (std::size_t j = 0; j < nk; ++j) {
      if (mask.allowed[i * nk + j]) cols.push_back(static_cast<std::uint32_t>(j));
    }
    row_start[i + 1] = cols.size();
    if (row_start[i + 1] == row_start[i]) {
      throw NumericError("masked_attention: fully masked row " + std::to_string(i));
    }
  }
  const std::size_t nnz = cols.size();
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  const T* qd = q.data().data();
  const T* kd = k.data().data();
  const T* vd = v.data().data();

  std::vector<T> out(nq * d, T(0));
  std::vector<T> p(heads * nnz);
  if (probs) {
    probs->heads = heads;
    probs->rows = nq;
    probs->cols = nk;
    probs->values.assign(heads * nq * nk, 0.0);
  }
  for (std::size_t h = 0; h < heads; ++h) {
    T* ph = p.data() + h * nnz;
    for (std::size_t i = 0; i < nq; ++i) {
      const T* qi = qd + i * d + h * hd;
      const std::size_t b = row_start[i], e = row_start[i + 1];
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t a = b; a < e; ++a) {
        const T* kj = kd + cols[a] * d + h * hd;
        T s = 0;
        for (std::size_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
        s *= scale;
        ph[a] = s;
        mx = std::max(mx, s);
      }
      T z = 0;
      for (std::size_t a = b; a < e; ++a) {
        ph[a] = std::exp(ph[a] - mx);
        z += ph[a];
      }
      T* oi = out.data() + i * d + h * hd;
      for (std::size_t a = b; a < e; ++a) {
        ph[a] /= z;
        const T* vj = vd + cols[a] * d + h * hd;
        for (std::size_t c = 0; c < hd; ++c) oi[c] += ph[a] * vj[c];
        if (probs) probs->values[(h * nq + i) * nk + cols[a]] = static_cast<double>(ph[a]);
      }
    }
  }

  return make_result<T>(
      {nq, d}, std::move(out), "attention", {q, k, v},
      [p = std::move(p), row_start = std::move(row_start), cols = std::move(cols), nq, d, hd,
       heads, nnz, scale](std::span<const T> g, auto in) {
        const T* qd = in[0]->data.data();
        const T* kd = in[1]->data.data();
        const T* vd = in[2]->data.data();
        T* gq = grad_target(in[0]);
        T* gk = grad_target(in[1]);
        T* gv = grad_target(in[2]);
        std::vector<T> ds;
        for (std::size_t h = 0; h < heads; ++h) {
          const T* ph = p.data() + h * nnz;
          for (std::size_t i = 0; i < nq; ++i) {
            const std::size_t b = row_start[i], e = row_start[i + 1];
            const T* go = g.data() + i * d + h * hd;
            ds.assign(e - b, T(0));
            T dot = 0;
            for (std::size_t a = b; a < e; ++a) {
              const T* vj = vd + cols[a] * d + h * hd;
              T dp = 0;
              for (std::size_t c = 0; c < hd; ++c) dp += go[c] * vj[c];
              ds[a - b] = dp;
              dot += ph[a] * dp;
              if (gv) {
                T* gvj = gv + cols[a] * d + h * hd;
                for (std::size_t c = 0; c < hd; ++c) gvj[c] += ph[a] * go[c];
              }
            }
            const T* qi = qd + i * d + h * hd;
            T* gqi = gq ? gq + i * d + h * hd : nullptr;
            for (std::size_t a = b; a < e; ++a) {
              const T dsa = ph[a] * (ds[a - b] - dot) * scale;
              const T* kj = kd + cols[a] * d + h * hd;
              if (gqi) {
                for (std::size_t c = 0; c < hd; ++c) gqi[c] += dsa * kj[c];
              }
              if (gk) {
                T* gkj = gk + cols[a] * d + h * hd;
                for (std::size_t c = 0; c < hd; ++c) gkj[c] += dsa * qi[c];
              }
            }
          }
        }
      });
}

template Tensor<float> apply_mrope(const Tensor<float>&, std::size_t,
                                   std::span<const PositionTriple>, const MropeSections&, double);
template Tensor<double> apply_mrope(const Tensor<double>&, std::size_t,
                                    std::span<const PositionTriple>, const MropeSections&, double);
template Tensor<float> masked_attention(const Tensor<float>&, const Tensor<float>&,
                                        const Tensor<float>&, std::size_t, const AttentionMask&,
                                        AttentionProbs*);
template Tensor<double> masked_attention(const Tensor<double>&, const Tensor<double>&,
                                         const Tensor<double>&, std::size_t, const AttentionMask&,
                                         AttentionProbs*);

}  // namespace genlip
