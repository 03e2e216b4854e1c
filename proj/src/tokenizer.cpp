// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "genlip/tokenizer.hpp"

#include <stdexcept>

namespace genlip {

ByteTokenizer::ByteTokenizer(std::size_t vocab_size, std::int32_t byte_offset)
    : vocab_(vocab_size),
      offset_(byte_offset),
      eos_(byte_offset + static_cast<std::int32_t>(kByteCount)),
      pad_(byte_offset + static_cast<std::int32_t>(kByteCount) + 1) {
  if (byte_offset < 0 || static_cast<std::size_t>(pad_) >= vocab_size) {
    throw std::invalid_argument("tokenizer: vocabulary of " + std::to_string(vocab_size) +
                                " cannot hold 256 bytes at offset " +
                                std::to_string(byte_offset) + " plus EOS and PAD");
  }
}

std::vector<std::int32_t> ByteTokenizer::encode(std::string_view text) const {
  std::vector<std::int32_t> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(offset_ + static_cast<unsigned char>(c));
  return ids;
}

std::string ByteTokenizer::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  out.reserve(ids.size());
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_) {
      throw std::out_of_range("tokenizer: id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(vocab_));
    }
    if (id == eos_) break;
    if (id == pad_) {
      out += "<pad>";
    } else if (id >= offset_ && id < offset_ + static_cast<std::int32_t>(kByteCount)) {
      out.push_back(static_cast<char>(id - offset_));
    } else {
      out += "<id:" + std::to_string(id) + ">";
    }
  }
  return out;
}

}  // namespace genlip
