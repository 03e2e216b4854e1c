// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "genlip/errors.hpp"
#include "genlip/inference.hpp"
#include "test_support.hpp"

using namespace genlip;
using namespace genlip::testing;

namespace {

// Final LN collapses to its bias, so the logits are lm_head row 0.
template <typename T>
void force_logits(Model<T>& m, const std::vector<std::pair<std::int32_t, double>>& row0) {
  auto& p = m.params();
  std::ranges::fill(p.final_gamma.data(), T(0));
  std::ranges::fill(p.final_beta.data(), T(0));
  p.final_beta.data()[0] = T(1);
  std::ranges::fill(p.lm_head.data(), T(0));
  for (auto [tok, v] : row0) p.lm_head.data()[static_cast<std::size_t>(tok)] = static_cast<T>(v);
}

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("decode config validation") {
  DecodeConfig c;
  CHECK(c.temperature == 1e-6);
  CHECK(c.top_p == 1.0);
  CHECK(c.max_new_tokens == 256);
  CHECK_NOTHROW(c.validate());
  c.temperature = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.top_p = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.top_p = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.max_new_tokens = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("sample_token: greedy limit and ties") {
  std::mt19937_64 rng(1);
  const DecodeConfig greedy;
  const std::vector<double> logits{0.1, 2.0, -1.0, 1.999};
  for (int i = 0; i < 100; ++i) CHECK(sample_token(logits, greedy, rng) == 1);
  // Exact ties share the mass; the draw is still fixed by the seed.
  const std::vector<double> tie{1.0, 3.0, 3.0, 0.0};
  std::mt19937_64 r1(7), r2(7);
  std::set<std::int32_t> seen;
  for (int i = 0; i < 100; ++i) {
    const auto t = sample_token(tie, greedy, r1);
    CHECK(t == sample_token(tie, greedy, r2));
    seen.insert(t);
  }
  CHECK(seen == std::set<std::int32_t>{1, 2});

  DecodeConfig narrow;
  narrow.temperature = 1.0;
  narrow.top_p = 0.01;
  for (int i = 0; i < 100; ++i) CHECK(sample_token(logits, narrow, rng) == 1);
}

TEST_CASE("sample_token: frequencies follow the truncated softmax") {
  std::mt19937_64 rng(2);
  const std::vector<double> logits{std::log(0.5), std::log(0.3), std::log(0.2)};
  DecodeConfig full;
  full.temperature = 1.0;
  const int n = 40000;
  std::vector<int> counts(3, 0);
  for (int i = 0; i < n; ++i) ++counts[sample_token(logits, full, rng)];
  for (auto [tok, p] : {std::pair{0, 0.5}, {1, 0.3}, {2, 0.2}}) {
    const double sigma = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(counts[tok] / double(n) - p) < 5 * sigma);
  }

  DecodeConfig nucleus = full;
  nucleus.top_p = 0.7;  // keeps {0.5, 0.3}
  std::vector<int> kept(3, 0);
  for (int i = 0; i < n; ++i) ++kept[sample_token(logits, nucleus, rng)];
  CHECK(kept[2] == 0);
  const double p0 = 0.5 / 0.8;
  CHECK(std::abs(kept[0] / double(n) - p0) < 5 * std::sqrt(p0 * (1 - p0) / n));
}

TEST_CASE("generate: greedy determinism and cached decoding") {
  const ModelConfig cfg = micro_config();
  const ByteTokenizer tok;
  DecodeConfig dc;
  dc.max_new_tokens = 12;
  for (std::uint64_t s = 0; s < 6; ++s) {
    Model<double> m(cfg, 30 + s);
    std::mt19937_64 rng(s);
    perturb_parameters(m, rng, 0.3);
    const Patches p = random_patches(1 + s % 3, 2 + s % 2, cfg.patch_size, rng);
    const auto a = generate_tokens(m, p, dc, tok);
    CHECK(a == generate_tokens(m, p, dc, tok));
    CHECK(a == generate_tokens(m, p, dc, tok, DecodeMode::Recompute));
  }
  // Sampled decoding also agrees when both modes share the seed.
  Model<float> m(cfg, 40);
  std::mt19937_64 rng(40);
  perturb_parameters(m, rng, 0.3);
  const Patches p = random_patches(2, 2, cfg.patch_size, rng);
  DecodeConfig hot;
  hot.temperature = 1.0;
  hot.max_new_tokens = 10;
  hot.seed = 9;
  CHECK(generate_tokens(m, p, hot, tok) == generate_tokens(m, p, hot, tok, DecodeMode::Recompute));
}

TEST_CASE("generate: stopping rules") {
  ModelConfig cfg = micro_config();
  const ByteTokenizer tok;
  std::mt19937_64 rng(41);
  const Patches p = random_patches(2, 3, cfg.patch_size, rng);

  Model<float> eos(cfg, 41);
  force_logits(eos, {{tok.eos(), 5.0}});
  CHECK(generate(eos, p, {}, tok).empty());

  Model<float> chatty(cfg, 42);
  force_logits(chatty, {{'a', 5.0}});
  DecodeConfig five;
  five.max_new_tokens = 5;
  CHECK(generate(chatty, p, five, tok) == "aaaaa");
  CHECK(generate(chatty, p, five, tok, DecodeMode::Recompute) == "aaaaa");

  cfg.max_tokens = 9;  // 6 image tokens leave room for 3
  Model<float> tight(cfg, 42);
  force_logits(tight, {{'b', 5.0}});
  CHECK(generate(tight, p, {}, tok) == "bbb");
}

TEST_CASE("patch_readout") {
  const ModelConfig cfg = micro_config();
  Model<double> m(cfg, 43);
  std::mt19937_64 rng(43);
  perturb_parameters(m, rng, 0.2);
  const Patches p = random_patches(3, 3, cfg.patch_size, rng);
  const std::vector<std::size_t> idx{4, 0, 4};
  const auto full = patch_readout(m, p, idx, cfg.vocab);
  REQUIRE(full.size() == 3);
  for (const auto& row : full) {
    REQUIRE(row.size() == cfg.vocab);
    double total = 0;
    for (std::size_t i = 0; i < row.size(); ++i) {
      total += row[i].prob;
      if (i > 0) {
        CHECK(row[i].prob <= row[i - 1].prob);
        if (row[i].prob == row[i - 1].prob) CHECK(row[i].token > row[i - 1].token);
      }
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
  for (std::size_t i = 0; i < cfg.vocab; ++i) {
    CHECK(full[0][i].token == full[2][i].token);
    CHECK(full[0][i].prob == full[2][i].prob);
  }
  const auto top = patch_readout(m, p, idx, 5);
  CHECK(top[1].size() == 5);
  CHECK(top[1][0].token == full[1][0].token);
  CHECK(patch_readout(m, p, idx, 100000)[0].size() == cfg.vocab);

  // Uniform logits: ties fall back to token order.
  force_logits(m, {});
  const auto ties = patch_readout(m, p, std::vector<std::size_t>{0}, 3);
  CHECK(ties[0][0].token == 0);
  CHECK(ties[0][2].token == 2);
  CHECK(ties[0][0].prob == doctest::Approx(1.0 / 258));

  CHECK_THROWS_AS(patch_readout(m, p, std::vector<std::size_t>{9}, 5), std::out_of_range);
  CHECK_THROWS_AS(patch_readout(m, p, idx, 0), ConfigError);
}

TEST_CASE("first-token mass arithmetic") {
  AttentionProbs a;
  a.heads = 1;
  a.rows = 2;
  a.cols = 2;
  a.values = {1.0, 0.0, 0.9, 0.1};
  const std::vector<std::size_t> rows{0, 1};
  CHECK(first_token_mass(a, 0, rows) == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(first_token_mass(a, 0, std::vector<std::size_t>{}) == 0.0);
}

TEST_CASE("sink mass: uniform attention gives 1/n") {
  const ModelConfig cfg = micro_config();
  Model<double> m(cfg, 44);
  for (auto& b : m.params().blocks) {
    for (auto* t : {&b.wq, &b.bq, &b.wk, &b.bk}) std::ranges::fill(t->data(), 0.0);
  }
  std::mt19937_64 rng(44);
  const Patches p = random_patches(3, 4, cfg.patch_size, rng);
  const SinkReport r = sink_mass(m, build_sequence(p, {}, 256));
  CHECK(r.layers == cfg.layers);
  CHECK(r.heads == cfg.heads);
  REQUIRE(r.mass.size() == cfg.layers * cfg.heads);
  for (double v : r.mass) CHECK(std::abs(v - 1.0 / 12) < 1e-15);
  CHECK(std::abs(r.mean - 1.0 / 12) < 1e-15);
}

TEST_CASE("sink mass: random model, packed input, csv") {
  const ModelConfig cfg = micro_config();
  Model<float> m(cfg, 45);
  std::mt19937_64 rng(45);
  perturb_parameters(m, rng, 0.5);
  const std::vector<PackedSequence> parts{
      build_sequence(random_patches(2, 2, cfg.patch_size, rng), std::vector<std::int32_t>{'h', 'i'}, 256),
      build_sequence(random_patches(1, 3, cfg.patch_size, rng), std::vector<std::int32_t>{'x'}, 256)};
  const auto packed = pack(parts, 20, 257)[0];
  SinkReport r = sink_mass(m, packed);
  const SinkReport solo = sink_mass(m, parts[0]);
  for (std::size_t i = 0; i < r.mass.size(); ++i) {
    CHECK(r.mass[i] >= 0.0);
    CHECK(r.mass[i] <= 1.0);
    CHECK(std::abs(r.mass[i] - solo.mass[i]) < 1e-5);
  }
  r.tag = "step=3";
  const auto path = std::filesystem::temp_directory_path() / "genlip_test_sink.csv";
  write_sink_csv(path, r);
  std::istringstream in(read_all(path));
  std::string line;
  std::getline(in, line);
  CHECK(line == "# genlip-sink v1 step=3");
  std::getline(in, line);
  CHECK(line == "layer,head,mass");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == cfg.layers * cfg.heads);
  std::filesystem::remove(path);
}

TEST_CASE("gating ablation: schema and determinism") {
  ModelConfig mc = micro_config();
  mc.patch_size = 16;
  TrainConfig tc;
  tc.total_steps = 5;
  tc.batch_tokens = 300;
  tc.pack_length = 300;
  tc.imaging.image_side = 32;
  const auto data = encode_samples(synth_generate(3, 6), Stage::S1, tc.imaging, 16, ByteTokenizer());
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto a = gating_ablation<float>(data, mc, tc, seeds, 2);
  // Steps 2, 4 and the final 5 for each (variant, seed).
  REQUIRE(a.rows.size() == 2 * 2 * 3);
  CHECK(a.rows[0].variant == "gated");
  CHECK(a.rows.back().variant == "ungated");
  CHECK(a.rows[2].step == 5);
  for (const auto& r : a.rows) {
    CHECK(r.sink_mass >= 0.0);
    CHECK(r.sink_mass <= 1.0);
    CHECK(std::isfinite(r.loss));
  }
  const auto b = gating_ablation<float>(data, mc, tc, seeds, 2);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].loss == b.rows[i].loss);
    CHECK(a.rows[i].sink_mass == b.rows[i].sink_mass);
  }
  CHECK(a.gated_final_sink == doctest::Approx((a.rows[2].sink_mass + a.rows[5].sink_mass) / 2));
  CHECK_THROWS_AS(gating_ablation<float>(data, mc, tc, std::vector<std::uint64_t>{1}, 2), ConfigError);

  const auto dir = std::filesystem::temp_directory_path() / "genlip_test_ablation";
  std::filesystem::create_directories(dir);
  write_ablation_csv(dir / "a.csv", a);
  write_ablation_svg(dir / "a.svg", a);
  std::istringstream csv(read_all(dir / "a.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "# genlip-ablation v1");
  std::getline(csv, line);
  CHECK(line == "variant,seed,step,loss,sink_mass");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 4);
  }
  CHECK(rows == a.rows.size());
  const std::string svg = read_all(dir / "a.svg");
  CHECK(svg.rfind("<svg", 0) == 0);
  std::size_t lines = 0;
  for (std::size_t pos = 0; (pos = svg.find("<polyline", pos)) != std::string::npos; ++pos) ++lines;
  CHECK(lines == 4);
  std::filesystem::remove_all(dir);
}
