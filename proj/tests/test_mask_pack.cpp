// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "genlip/errors.hpp"
#include "genlip/sequence.hpp"
#include "test_support.hpp"

using namespace genlip;
using genlip::testing::random_patches;

namespace {

constexpr std::int32_t kEos = 256;
constexpr std::int32_t kPad = 257;

PackedSequence sample(std::size_t patches, std::size_t caption_len, std::mt19937_64& rng,
                      std::string name = "s") {
  std::vector<std::int32_t> ids(caption_len);
  std::uniform_int_distribution<std::int32_t> byte(0, 255);
  for (auto& id : ids) id = byte(rng);
  return build_sequence(random_patches(1, patches, 1, rng), ids, kEos, std::move(name));
}

// Lengths of the samples in each pack, by direct first-fit simulation.
std::vector<std::vector<std::size_t>> first_fit(const std::vector<std::size_t>& lens,
                                                std::size_t cap) {
  std::vector<std::vector<std::size_t>> packs;
  std::vector<std::size_t> used;
  for (std::size_t len : lens) {
    std::size_t b = 0;
    while (b < packs.size() && used[b] + len > cap) ++b;
    if (b == packs.size()) {
      packs.emplace_back();
      used.push_back(0);
    }
    packs[b].push_back(len);
    used[b] += len;
  }
  return packs;
}

}  // namespace

TEST_CASE("build_sequence: 2x2 grid with caption \"hi\"") {
  std::mt19937_64 rng(31);
  const std::int32_t hi[] = {'h', 'i'};
  const auto seq = build_sequence(random_patches(2, 2, 1, rng), hi, kEos, "x");
  using K = TokenKind;
  CHECK(seq.kinds == std::vector<K>{K::Image, K::Image, K::Image, K::Image, K::Text, K::Text, K::Text});
  CHECK(seq.token_ids[4] == 'h');
  CHECK(seq.token_ids[5] == 'i');
  CHECK(seq.token_ids[6] == kEos);
  const std::vector<PositionTriple> expect{{0, 0, 0}, {0, 0, 1}, {0, 1, 0}, {0, 1, 1},
                                           {2, 2, 2}, {3, 3, 3}, {4, 4, 4}};
  CHECK(seq.positions == expect);
  CHECK(seq.loss_mask == std::vector<std::uint8_t>{0, 0, 0, 1, 1, 1, 0});
  CHECK(seq.targets()[3] == 'h');
  CHECK(seq.targets()[5] == kEos);
  CHECK(seq.sample_boundaries == std::vector<std::size_t>{0, 7});
  validate(seq);
}

TEST_CASE("build_sequence: empty caption and single character") {
  std::mt19937_64 rng(32);
  const auto image_only = build_sequence(random_patches(3, 2, 1, rng), {}, kEos);
  CHECK(image_only.size() == 6);
  for (auto k : image_only.kinds) CHECK(k == TokenKind::Image);
  CHECK(image_only.supervised_count() == 0);

  const std::int32_t a[] = {'a'};
  const auto tiny = build_sequence(random_patches(1, 1, 1, rng), a, kEos);
  CHECK(tiny.size() == 3);
  CHECK(tiny.supervised_count() == 2);

  Patches none;
  none.grid = {0, 0, 1};
  CHECK_THROWS_AS(build_sequence(none, a, kEos), DataError);
}

TEST_CASE("first text coordinate is one past the largest image coordinate") {
  std::mt19937_64 rng(33);
  const std::int32_t c[] = {'c'};
  for (auto [r, k] : {std::pair<std::size_t, std::size_t>{1, 1}, {1, 5}, {4, 2}, {3, 3}}) {
    const auto seq = build_sequence(random_patches(r, k, 1, rng), c, kEos);
    std::int32_t max_coord = 0;
    for (std::size_t i = 0; i < r * k; ++i) {
      max_coord = std::max({max_coord, seq.positions[i].t, seq.positions[i].h, seq.positions[i].w});
    }
    const auto& first = seq.positions[r * k];
    CHECK(first.t == max_coord + 1);
    CHECK(first.h == first.t);
    CHECK(first.w == first.t);
  }
}

TEST_CASE("pack examples") {
  std::mt19937_64 rng(34);
  // 4 patches + 5 characters + EOS = 10 tokens.
  std::vector<PackedSequence> three{sample(4, 5, rng, "a"), sample(4, 5, rng, "b"),
                                    sample(4, 5, rng, "c")};
  const auto packs = pack(three, 25, kPad);
  REQUIRE(packs.size() == 2);
  CHECK(packs[0].sample_names == std::vector<std::string>{"a", "b"});
  CHECK(packs[1].sample_names == std::vector<std::string>{"c"});
  CHECK(packs[0].size() == 25);
  CHECK(packs[1].size() == 25);
  for (std::size_t i = 20; i < 25; ++i) {
    CHECK(packs[0].kinds[i] == TokenKind::Pad);
    CHECK(packs[0].token_ids[i] == kPad);
    CHECK(packs[0].loss_mask[i] == 0);
    CHECK(packs[0].sample_ids[i] == 2);
  }
  const auto exact = pack(std::span(three.data(), 1), 10, kPad);
  REQUIRE(exact.size() == 1);
  CHECK(exact[0].size() == 10);
  CHECK(std::count(exact[0].kinds.begin(), exact[0].kinds.end(), TokenKind::Pad) == 0);
  CHECK(pack({}, 10, kPad).empty());

  CHECK_THROWS_WITH_AS(pack(three, 9, kPad), doctest::Contains("'a'"), DataError);
}

TEST_CASE("pack matches a first-fit simulation") {
  std::mt19937_64 rng(35);
  std::uniform_int_distribution<std::size_t> patches(1, 12), text(0, 30), count(1, 15);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<PackedSequence> samples;
    std::vector<std::size_t> lens;
    const std::size_t n = count(rng);
    for (std::size_t i = 0; i < n; ++i) {
      samples.push_back(sample(patches(rng), text(rng), rng, "s" + std::to_string(i)));
      lens.push_back(samples.back().size());
    }
    const std::size_t cap = 44;
    const auto expect = first_fit(lens, cap);
    const auto packs = pack(samples, cap, kPad);
    REQUIRE(packs.size() == expect.size());
    for (std::size_t p = 0; p < packs.size(); ++p) {
      validate(packs[p]);
      CHECK(packs[p].size() == cap);
      REQUIRE(packs[p].sample_count() == expect[p].size());
      for (std::size_t s = 0; s < expect[p].size(); ++s) {
        CHECK(packs[p].sample_boundaries[s + 1] - packs[p].sample_boundaries[s] == expect[p][s]);
      }
      for (std::size_t i = 1; i < cap; ++i) {
        CHECK(packs[p].sample_ids[i] >= packs[p].sample_ids[i - 1]);
      }
    }
  }
}

TEST_CASE("prefix_lm_mask examples") {
  std::mt19937_64 rng(36);
  const auto image_only = build_sequence(random_patches(2, 3, 1, rng), {}, kEos);
  const auto full = prefix_lm_mask(image_only);
  for (auto v : full.allowed) CHECK(v == 1);

  // 2 image tokens + 2 text tokens ("x" + EOS).
  const std::int32_t x[] = {'x'};
  const auto seq = build_sequence(random_patches(1, 2, 1, rng), x, kEos);
  CHECK(render_mask(prefix_lm_mask(seq)) == "11..\n11..\n111.\n1111\n");

  std::vector<PackedSequence> two{sample(2, 1, rng), sample(3, 2, rng)};
  const auto packed = pack(two, 12, kPad);
  REQUIRE(packed.size() == 1);
  const auto m = prefix_lm_mask(packed[0]);
  for (std::size_t q = 0; q < m.rows; ++q) {
    for (std::size_t k = 0; k < m.cols; ++k) {
      if (packed[0].sample_ids[q] != packed[0].sample_ids[k]) CHECK_FALSE(m.at(q, k));
    }
  }
  CHECK(m == oracle_mask(packed[0]));
}

TEST_CASE("oracle_mask special cases") {
  PackedSequence pads;
  pads.sample_boundaries = {0};
  for (int i = 0; i < 4; ++i) {
    pads.token_ids.push_back(kPad);
    pads.kinds.push_back(TokenKind::Pad);
    pads.sample_ids.push_back(0);
    pads.positions.push_back({});
    pads.loss_mask.push_back(0);
  }
  const auto eye = oracle_mask(pads);
  CHECK(render_mask(eye) == "1...\n.1..\n..1.\n...1\n");
  CHECK(prefix_lm_mask(pads) == eye);

  PackedSequence text;
  text.token_ids = {'q'};
  text.kinds = {TokenKind::Text};
  text.sample_ids = {0};
  text.positions = {{0, 0, 0}};
  text.loss_mask = {0};
  text.sample_boundaries = {0, 1};
  text.sample_names = {"t"};
  const auto one = oracle_mask(text);
  CHECK(one.rows == 1);
  CHECK(one.at(0, 0));
  CHECK(prefix_lm_mask(text) == one);
}

TEST_CASE("mask structure on random packs") {
  std::mt19937_64 rng(37);
  std::uniform_int_distribution<std::size_t> patches(1, 9), text(0, 12), count(1, 6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PackedSequence> samples;
    const std::size_t n = count(rng);
    for (std::size_t i = 0; i < n; ++i) samples.push_back(sample(patches(rng), text(rng), rng));
    for (const auto& p : pack(samples, 64, kPad)) {
      const auto m = prefix_lm_mask(p);
      for (std::size_t q = 0; q < m.rows; ++q) {
        bool any = false;
        for (std::size_t k = 0; k < m.cols; ++k) {
          any = any || m.at(q, k);
          const bool both_image = p.kinds[q] == TokenKind::Image && p.kinds[k] == TokenKind::Image;
          if (both_image) CHECK(m.at(q, k) == m.at(k, q));
          if (p.kinds[q] == TokenKind::Text && k > q) CHECK_FALSE(m.at(q, k));
          if (p.kinds[q] == TokenKind::Image && p.kinds[k] == TokenKind::Text) CHECK_FALSE(m.at(q, k));
        }
        CHECK(any);
        if (p.loss_mask[q]) {
          REQUIRE(q + 1 < p.size());
          CHECK(p.kinds[q + 1] == TokenKind::Text);
          CHECK(p.sample_ids[q + 1] == p.sample_ids[q]);
        }
      }
    }
  }
}

TEST_CASE("validate rejects malformed sequences") {
  std::mt19937_64 rng(38);
  const std::int32_t ab[] = {'a', 'b'};
  auto seq = build_sequence(random_patches(1, 2, 1, rng), ab, kEos);
  auto bad_order = seq;
  std::swap(bad_order.kinds[1], bad_order.kinds[2]);
  CHECK_THROWS_AS(validate(bad_order), DataError);
  auto bad_mask = seq;
  bad_mask.loss_mask[0] = 1;
  CHECK_THROWS_AS(validate(bad_mask), DataError);
  auto bad_len = seq;
  bad_len.positions.pop_back();
  CHECK_THROWS_AS(validate(bad_len), DataError);
}

TEST_CASE("concat keeps per-sample patch tables") {
  std::mt19937_64 rng(39);
  std::vector<PackedSequence> s{sample(2, 1, rng, "a"), sample(3, 0, rng, "b")};
  const auto c = concat(s);
  CHECK(c.size() == s[0].size() + s[1].size());
  CHECK(c.patch_count() == 5);
  CHECK(c.token_ids[s[0].size()] == 2);  // first patch of the second sample
  CHECK(c.sample_names == std::vector<std::string>{"a", "b"});
  validate(c);
}
