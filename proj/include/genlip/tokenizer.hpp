// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace genlip {

/// Byte-level tokenizer: ids 0..255 are raw bytes (shifted by byte_offset),
/// followed by EOS and PAD. Larger vocabularies are accepted so that model
/// configs sized for a subword vocabulary still validate; the extra ids are
/// never produced by encode().
class ByteTokenizer {
 public:
  static constexpr std::size_t kByteCount = 256;
  static constexpr std::size_t kMinVocab = kByteCount + 2;

  explicit ByteTokenizer(std::size_t vocab_size = kMinVocab, std::int32_t byte_offset = 0);

  std::vector<std::int32_t> encode(std::string_view text) const;
  /// Stops at the first EOS. PAD renders as "<pad>", other non-byte ids as
  /// "<id:N>".
  std::string decode(std::span<const std::int32_t> ids) const;

  std::int32_t eos() const { return eos_; }
  std::int32_t pad() const { return pad_; }
  std::size_t vocab_size() const { return vocab_; }
  std::int32_t byte_offset() const { return offset_; }

 private:
  std::size_t vocab_;
  std::int32_t offset_;
  std::int32_t eos_;
  std::int32_t pad_;
};

}  // namespace genlip
