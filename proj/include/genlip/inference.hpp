// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Caption generation, patch-semantics readout and attention-sink probes.

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "genlip/model.hpp"
#include "genlip/tokenizer.hpp"
#include "genlip/train.hpp"

namespace genlip {

struct DecodeConfig {
  double temperature = 1e-6;
  double top_p = 1.0;
  std::size_t max_new_tokens = 256;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class DecodeMode : std::uint8_t {
  Incremental,  // K/V cache, one new row per step
  Recompute,    // full forward over the whole prefix at every step
};

/// Nucleus sampling over softmax(logits / temperature); ties in probability
/// are ordered by token id.
std::int32_t sample_token(std::span<const double> logits, const DecodeConfig& cfg,
                          std::mt19937_64& rng);

/// Generated ids, without the terminating EOS.
template <typename T>
std::vector<std::int32_t> generate_tokens(const Model<T>& model, const Patches& patches,
                                          const DecodeConfig& cfg, const ByteTokenizer& tokenizer,
                                          DecodeMode mode = DecodeMode::Incremental);

template <typename T>
std::string generate(const Model<T>& model, const Patches& patches, const DecodeConfig& cfg,
                     const ByteTokenizer& tokenizer, DecodeMode mode = DecodeMode::Incremental);

struct TokenProb {
  std::int32_t token;
  double prob;
};

/// LM-head distribution of selected patch features, top-k by probability
/// (ties by token id).
template <typename T>
std::vector<std::vector<TokenProb>> patch_readout(const Model<T>& model, const Patches& patches,
                                                  std::span<const std::size_t> patch_indices,
                                                  std::size_t k);

struct SinkReport {
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::vector<double> mass;  // [layer * heads + head]
  double mean = 0.0;
  std::string tag;

  double at(std::size_t layer, std::size_t head) const { return mass[layer * heads + head]; }
};

/// Mean weight on key 0 over the given query rows of one head.
double first_token_mass(const AttentionProbs& probs, std::size_t head,
                        std::span<const std::size_t> rows);

/// Eval-mode forward capturing attention; per layer and head, the mean
/// weight on the first token over the non-Pad rows of the first sample.
template <typename T>
SinkReport sink_mass(const Model<T>& model, const PackedSequence& seq);

/// "# genlip-sink v1" tag, then layer,head,mass rows.
void write_sink_csv(const std::filesystem::path& path, const SinkReport& report);

// ---------------------------------------------------------------------------
// Gated vs ungated training.

struct AblationRow {
  std::string variant;  // "gated" or "ungated"
  std::uint64_t seed = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double sink_mass = 0.0;
};

struct AblationSummary {
  std::vector<AblationRow> rows;
  double gated_final_sink = 0.0;    // mean over seeds
  double ungated_final_sink = 0.0;
  double gated_final_loss = 0.0;
  double ungated_final_loss = 0.0;
};

/// Trains matched gated/ungated models per seed (seed drives init and data
/// order), recording loss and sink mass every record_every steps and at the end.
template <typename T>
AblationSummary gating_ablation(const std::vector<EncodedSample>& dataset,
                                const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                std::span<const std::uint64_t> seeds, std::size_t record_every);

/// "# genlip-ablation v1" tag, then variant,seed,step,loss,sink_mass rows.
void write_ablation_csv(const std::filesystem::path& path, const AblationSummary& summary);
/// Sink mass vs step, one polyline per (variant, seed).
void write_ablation_svg(const std::filesystem::path& path, const AblationSummary& summary);

}  // namespace genlip
