// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>
#include <stdexcept>

#include "genlip/tokenizer.hpp"

using namespace genlip;

TEST_CASE("encode examples") {
  const ByteTokenizer tok;
  CHECK(tok.encode("").empty());
  CHECK(tok.encode("A") == std::vector<std::int32_t>{65});
  const ByteTokenizer shifted(300, 3);
  CHECK(shifted.encode("A") == std::vector<std::int32_t>{68});
  CHECK(tok.eos() != tok.pad());
  CHECK(tok.eos() < 258);
  CHECK(tok.pad() < 258);
}

TEST_CASE("decode examples") {
  const ByteTokenizer tok;
  CHECK(tok.decode({}).empty());
  auto ids = tok.encode("red circle");
  ids.push_back(tok.eos());
  ids.push_back('x');
  CHECK(tok.decode(ids) == "red circle");
  const std::int32_t pad[] = {'a', tok.pad(), 'b'};
  CHECK(tok.decode(pad) == "a<pad>b");
  const std::int32_t bad[] = {258};
  CHECK_THROWS_AS(tok.decode(bad), std::out_of_range);
  const std::int32_t negative[] = {-1};
  CHECK_THROWS_AS(tok.decode(negative), std::out_of_range);
}

TEST_CASE("multi-byte text round-trips") {
  const ByteTokenizer tok;
  const std::string s = "caf\xC3\xA9 \xE2\x9C\x93 \xF0\x9F\x90\x88";
  const auto ids = tok.encode(s);
  CHECK(ids.size() == s.size());
  CHECK(tok.decode(ids) == s);
}

TEST_CASE("decode(encode(s)) over a random byte corpus") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> byte(0, 255), len(0, 64);
  for (const auto& tok : {ByteTokenizer(), ByteTokenizer(151936), ByteTokenizer(400, 17)}) {
    for (int n = 0; n < 500; ++n) {
      std::string s(static_cast<std::size_t>(len(rng)), '\0');
      for (auto& c : s) c = static_cast<char>(byte(rng));
      const auto ids = tok.encode(s);
      for (auto id : ids) CHECK((id >= 0 && static_cast<std::size_t>(id) < tok.vocab_size()));
      CHECK(tok.decode(ids) == s);
    }
  }
}

TEST_CASE("encode is prefix-monotone") {
  const ByteTokenizer tok;
  const std::string a = "a blue", b = " square.";
  const auto ab = tok.encode(a + b);
  const auto pa = tok.encode(a);
  CHECK(std::equal(pa.begin(), pa.end(), ab.begin()));
}

TEST_CASE("vocabulary validation") {
  CHECK_THROWS(ByteTokenizer(257));
  CHECK_NOTHROW(ByteTokenizer(151936));
  CHECK_THROWS(ByteTokenizer(258, 1));
}
