// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Multimodal rotary positions and masked multi-head attention as tape ops.
// Activations are [tokens, heads * head_dim] with each head a contiguous
// column block.

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "genlip/sequence.hpp"
#include "genlip/tensor.hpp"

namespace genlip {

/// Rotary pairs per coordinate, ordered (t, h, w); they sum to head_dim / 2.
using MropeSections = std::array<std::size_t, 3>;

/// Rotates channel pairs (j, j + head_dim/2) of every head. Pair j belongs to
/// the t, h or w section by its index and turns by coord * theta^(-2j/head_dim).
template <typename T>
Tensor<T> apply_mrope(const Tensor<T>& x, std::size_t heads,
                      std::span<const PositionTriple> positions, const MropeSections& sections,
                      double theta);

/// Post-softmax weights, dense [heads, rows, cols], filled on request.
struct AttentionProbs {
  std::size_t heads = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t h, std::size_t q, std::size_t k) const {
    return values[(h * rows + q) * cols + k];
  }
};

/// softmax(q·kᵀ/√head_dim + mask)·v per head. Disallowed keys get exactly
/// zero weight; a query row without any allowed key is an error.
template <typename T>
Tensor<T> masked_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           std::size_t heads, const AttentionMask& mask,
                           AttentionProbs* probs = nullptr);

}  // namespace genlip
