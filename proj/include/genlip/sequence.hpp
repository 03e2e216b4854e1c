// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Token streams of the form [v_0..v_M, t_0..t_L, EOS], sequence packing and
// the per-sample prefix-LM attention mask.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "genlip/image.hpp"
#include "genlip/tokenizer.hpp"

namespace genlip {

enum class TokenKind : std::uint8_t { Image, Text, Pad };

/// Rotary coordinates (temporal, height, width).
struct PositionTriple {
  std::int32_t t = 0;
  std::int32_t h = 0;
  std::int32_t w = 0;
  bool operator==(const PositionTriple&) const = default;
};

struct PackedSequence {
  /// Text and Pad positions hold vocabulary ids; Image positions hold a row
  /// index into `patches`.
  std::vector<std::int32_t> token_ids;
  std::vector<TokenKind> kinds;
  /// Index of the sample inside this sequence; Pad positions carry the
  /// sample count so the list stays non-decreasing.
  std::vector<std::int32_t> sample_ids;
  std::vector<PositionTriple> positions;
  /// loss_mask[i]: the logits at i are trained to predict token_ids[i + 1].
  std::vector<std::uint8_t> loss_mask;
  /// Start offset of every sample, followed by the end of the last sample.
  std::vector<std::size_t> sample_boundaries;
  std::vector<std::string> sample_names;
  std::vector<PatchGrid> grids;

  std::size_t patch_width = 0;
  std::vector<float> patches;  // [image token count, patch_width]

  std::size_t size() const { return kinds.size(); }
  std::size_t sample_count() const { return sample_names.size(); }
  std::size_t patch_count() const { return patch_width ? patches.size() / patch_width : 0; }
  std::size_t supervised_count() const;
  /// Next-token targets aligned with loss_mask; -1 where nothing is supervised.
  std::vector<std::int32_t> targets() const;
};

/// Builds one sample. Image tokens get t = 0 and (h, w) = grid (row, col);
/// text token k gets t = h = w = 1 + max image coordinate + k. An EOS is
/// appended whenever the caption is non-empty; an empty caption yields the
/// image-only sequence used for feature extraction.
PackedSequence build_sequence(const Patches& patches, std::span<const std::int32_t> caption_ids,
                              std::int32_t eos_id, std::string name = {});

/// Image prefix followed by text ids without an EOS (decoding prompts).
PackedSequence build_prefix(const Patches& patches, std::span<const std::int32_t> text_ids,
                            std::string name = {});

/// Greedy first-fit in arrival order; every pack is padded to max_len.
std::vector<PackedSequence> pack(std::span<const PackedSequence> samples, std::size_t max_len,
                                 std::int32_t pad_id);

/// Concatenates single-sample sequences without padding.
PackedSequence concat(std::span<const PackedSequence> samples);

/// Dense boolean matrix, row = query, column = key.
struct AttentionMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> allowed;

  static AttentionMask full(std::size_t rows, std::size_t cols);
  bool at(std::size_t q, std::size_t k) const { return allowed[q * cols + k] != 0; }
  bool operator==(const AttentionMask&) const = default;
};

/// Per-sample prefix-LM mask: image queries see the image tokens of their
/// sample, text queries see every earlier token of their sample, Pad queries
/// see only themselves.
AttentionMask prefix_lm_mask(const PackedSequence& seq);

/// Direct evaluation of the mask predicate for every (q, k). Test reference
/// for prefix_lm_mask.
AttentionMask oracle_mask(const PackedSequence& seq);

/// Rows of '1' / '.' characters.
std::string render_mask(const AttentionMask& mask);

/// Throws DataError describing the first violated PackedSequence invariant.
void validate(const PackedSequence& seq);

}  // namespace genlip
