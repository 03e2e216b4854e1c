// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "genlip/sequence.hpp"

#include <algorithm>

#include "genlip/errors.hpp"

namespace genlip {

std::size_t PackedSequence::supervised_count() const {
  return static_cast<std::size_t>(std::count(loss_mask.begin(), loss_mask.end(), 1));
}

std::vector<std::int32_t> PackedSequence::targets() const {
  std::vector<std::int32_t> out(size(), -1);
  for (std::size_t i = 0; i + 1 < size(); ++i) {
    if (loss_mask[i]) out[i] = token_ids[i + 1];
  }
  return out;
}

namespace {

PackedSequence image_prefix(const Patches& patches, std::string name) {
  if (patches.count() == 0) throw DataError("build_sequence: sample has zero patches");
  if (patches.values.size() != patches.count() * patches.width()) {
    throw DataError("build_sequence: patch values do not match the grid");
  }
  PackedSequence seq;
  const std::size_t m = patches.count();
  seq.patch_width = patches.width();
  seq.patches = patches.values;
  seq.grids.push_back(patches.grid);
  seq.sample_names.push_back(std::move(name));
  seq.sample_boundaries = {0};
  for (std::size_t i = 0; i < m; ++i) {
    seq.token_ids.push_back(static_cast<std::int32_t>(i));
    seq.kinds.push_back(TokenKind::Image);
    seq.sample_ids.push_back(0);
    seq.positions.push_back({0, static_cast<std::int32_t>(i / patches.grid.cols),
                             static_cast<std::int32_t>(i % patches.grid.cols)});
    seq.loss_mask.push_back(0);
  }
  return seq;
}

void append_text(PackedSequence& seq, std::span<const std::int32_t> ids) {
  const PatchGrid& g = seq.grids.front();
  // One past the largest image coordinate, max(rows - 1, cols - 1) + 1.
  const auto first = static_cast<std::int32_t>(std::max(g.rows, g.cols));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    // The token before each text token predicts it.
    seq.loss_mask.back() = 1;
    const std::int32_t coord = first + static_cast<std::int32_t>(k);
    seq.token_ids.push_back(ids[k]);
    seq.kinds.push_back(TokenKind::Text);
    seq.sample_ids.push_back(0);
    seq.positions.push_back({coord, coord, coord});
    seq.loss_mask.push_back(0);
  }
  seq.sample_boundaries.push_back(seq.size());
}

}  // namespace

PackedSequence build_sequence(const Patches& patches, std::span<const std::int32_t> caption_ids,
                              std::int32_t eos_id, std::string name) {
  PackedSequence seq = image_prefix(patches, std::move(name));
  if (caption_ids.empty()) {
    seq.sample_boundaries.push_back(seq.size());
    return seq;
  }
  std::vector<std::int32_t> text(caption_ids.begin(), caption_ids.end());
  text.push_back(eos_id);
  append_text(seq, text);
  return seq;
}

PackedSequence build_prefix(const Patches& patches, std::span<const std::int32_t> text_ids,
                            std::string name) {
  PackedSequence seq = image_prefix(patches, std::move(name));
  append_text(seq, text_ids);
  return seq;
}

PackedSequence concat(std::span<const PackedSequence> samples) {
  PackedSequence out;
  out.sample_boundaries = {0};
  for (const auto& s : samples) {
    if (s.sample_count() != 1 || s.size() != s.sample_boundaries.back()) {
      throw DataError("concat: inputs must be unpadded single-sample sequences");
    }
    if (out.patch_width == 0) out.patch_width = s.patch_width;
    if (s.patch_width != out.patch_width) {
      throw DataError("concat: sample '" + s.sample_names.front() + "' has patch width " +
                      std::to_string(s.patch_width) + ", expected " +
                      std::to_string(out.patch_width));
    }
    const auto patch_offset = static_cast<std::int32_t>(out.patch_count());
    const auto sample_index = static_cast<std::int32_t>(out.sample_count());
    for (std::size_t i = 0; i < s.size(); ++i) {
      const bool image = s.kinds[i] == TokenKind::Image;
      out.token_ids.push_back(image ? s.token_ids[i] + patch_offset : s.token_ids[i]);
      out.kinds.push_back(s.kinds[i]);
      out.sample_ids.push_back(sample_index);
      out.positions.push_back(s.positions[i]);
      out.loss_mask.push_back(s.loss_mask[i]);
    }
    out.patches.insert(out.patches.end(), s.patches.begin(), s.patches.end());
    out.grids.push_back(s.grids.front());
    out.sample_names.push_back(s.sample_names.front());
    out.sample_boundaries.push_back(out.size());
  }
  return out;
}

std::vector<PackedSequence> pack(std::span<const PackedSequence> samples, std::size_t max_len,
                                 std::int32_t pad_id) {
  struct Bin {
    std::vector<std::size_t> members;
    std::size_t used = 0;
  };
  std::vector<Bin> bins;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::size_t len = samples[i].size();
    if (len > max_len) {
      const std::string name =
          samples[i].sample_names.empty() ? std::to_string(i) : samples[i].sample_names.front();
      throw DataError("pack: sample '" + name + "' has " + std::to_string(len) +
                      " tokens, more than the packing length " + std::to_string(max_len));
    }
    auto it = std::find_if(bins.begin(), bins.end(),
                           [&](const Bin& b) { return b.used + len <= max_len; });
    if (it == bins.end()) it = bins.insert(bins.end(), Bin{});
    it->members.push_back(i);
    it->used += len;
  }

  std::vector<PackedSequence> packs;
  packs.reserve(bins.size());
  for (const auto& bin : bins) {
    std::vector<PackedSequence> members;
    members.reserve(bin.members.size());
    for (std::size_t i : bin.members) members.push_back(samples[i]);
    PackedSequence p = concat(members);
    const auto pad_sample = static_cast<std::int32_t>(p.sample_count());
    while (p.size() < max_len) {
      p.token_ids.push_back(pad_id);
      p.kinds.push_back(TokenKind::Pad);
      p.sample_ids.push_back(pad_sample);
      p.positions.push_back({});
      p.loss_mask.push_back(0);
    }
    packs.push_back(std::move(p));
  }
  return packs;
}

AttentionMask AttentionMask::full(std::size_t rows, std::size_t cols) {
  return {rows, cols, std::vector<std::uint8_t>(rows * cols, 1)};
}

AttentionMask prefix_lm_mask(const PackedSequence& seq) {
  const std::size_t n = seq.size();
  AttentionMask mask{n, n, std::vector<std::uint8_t>(n * n, 0)};
  for (std::size_t s = 0; s + 1 < seq.sample_boundaries.size(); ++s) {
    const std::size_t begin = seq.sample_boundaries[s];
    const std::size_t end = seq.sample_boundaries[s + 1];
    std::size_t images = begin;
    while (images < end && seq.kinds[images] == TokenKind::Image) ++images;
    // Image block: bidirectional over the sample's image tokens.
    for (std::size_t q = begin; q < images; ++q) {
      std::fill_n(&mask.allowed[q * n + begin], images - begin, 1);
    }
    // Text rows: causal over the whole sample prefix.
    for (std::size_t q = images; q < end; ++q) {
      std::fill_n(&mask.allowed[q * n + begin], q - begin + 1, 1);
    }
  }
  for (std::size_t q = 0; q < n; ++q) {
    if (seq.kinds[q] == TokenKind::Pad) mask.allowed[q * n + q] = 1;
  }
  return mask;
}

AttentionMask oracle_mask(const PackedSequence& seq) {
  const std::size_t n = seq.size();
  AttentionMask mask{n, n, std::vector<std::uint8_t>(n * n, 0)};
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t k = 0; k < n; ++k) {
      bool ok = false;
      if (seq.kinds[q] == TokenKind::Pad) {
        ok = (q == k);
      } else if (seq.sample_ids[q] == seq.sample_ids[k] && seq.kinds[k] != TokenKind::Pad) {
        const bool both_image = seq.kinds[q] == TokenKind::Image && seq.kinds[k] == TokenKind::Image;
        const bool causal_text = seq.kinds[q] == TokenKind::Text && k <= q;
        ok = both_image || causal_text;
      }
      mask.allowed[q * n + k] = ok ? 1 : 0;
    }
  }
  return mask;
}

std::string render_mask(const AttentionMask& mask) {
  std::string out;
  out.reserve(mask.rows * (mask.cols + 1));
  for (std::size_t q = 0; q < mask.rows; ++q) {
    for (std::size_t k = 0; k < mask.cols; ++k) out.push_back(mask.at(q, k) ? '1' : '.');
    out.push_back('\n');
  }
  return out;
}

void validate(const PackedSequence& seq) {
  const std::size_t n = seq.size();
  if (seq.token_ids.size() != n || seq.sample_ids.size() != n || seq.positions.size() != n ||
      seq.loss_mask.size() != n) {
    throw DataError("sequence: per-token arrays have different lengths");
  }
  if (seq.sample_boundaries.size() != seq.sample_count() + 1 || seq.sample_boundaries.front() != 0) {
    throw DataError("sequence: sample boundaries do not match the sample list");
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (seq.sample_ids[i] < seq.sample_ids[i - 1]) throw DataError("sequence: sample ids decrease");
  }
  for (std::size_t s = 0; s < seq.sample_count(); ++s) {
    bool seen_text = false;
    for (std::size_t i = seq.sample_boundaries[s]; i < seq.sample_boundaries[s + 1]; ++i) {
      if (seq.sample_ids[i] != static_cast<std::int32_t>(s) || seq.kinds[i] == TokenKind::Pad) {
        throw DataError("sequence: token " + std::to_string(i) + " outside its sample block");
      }
      if (seq.kinds[i] == TokenKind::Text) seen_text = true;
      if (seq.kinds[i] == TokenKind::Image && seen_text) {
        throw DataError("sequence: image token after text in sample " + std::to_string(s));
      }
    }
  }
  for (std::size_t i = seq.sample_boundaries.back(); i < n; ++i) {
    if (seq.kinds[i] != TokenKind::Pad) throw DataError("sequence: non-pad token in the tail");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!seq.loss_mask[i]) continue;
    if (i + 1 >= n || seq.kinds[i + 1] != TokenKind::Text ||
        seq.sample_ids[i + 1] != seq.sample_ids[i]) {
      throw DataError("sequence: loss mask at " + std::to_string(i) +
                      " does not predict a text token of the same sample");
    }
  }
}

}  // namespace genlip
