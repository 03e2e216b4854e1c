// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Single-stack vision-language transformer: patch and token embeddings,
// pre-norm blocks with sigmoid-gated attention and a SwiGLU feed-forward,
// layer scale and drop path on both residual branches, final LayerNorm and an
// untied LM head.

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "genlip/attention.hpp"
#include "genlip/sequence.hpp"
#include "genlip/tensor.hpp"

namespace genlip {

struct ModelConfig {
  std::size_t layers = 4;
  std::size_t dim = 128;
  std::size_t heads = 4;
  std::size_t ffn_width = 352;
  std::size_t vocab = 258;
  std::size_t patch_size = 16;
  double rope_theta = 10000.0;
  MropeSections mrope_sections{4, 6, 6};
  double layer_scale_init = 0.1;
  double drop_path_rate = 0.1;
  std::size_t max_tokens = 16384;
  /// false replaces the sigmoid gate by the constant 1.
  bool gated = true;
  double norm_eps = 1e-6;
  double init_std = 0.02;

  std::size_t head_dim() const { return dim / heads; }
  std::size_t patch_width() const { return 3 * patch_size * patch_size; }
  /// Throws ConfigError on the first violated constraint.
  void validate() const;

  /// (t, h, w) pairs in proportion 2:3:3, remainder to t.
  static MropeSections default_sections(std::size_t head_dim);
  static ModelConfig tiny();
  static ModelConfig paper_l();
  static ModelConfig preset(const std::string& name);

  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

template <typename T>
struct BlockParameters {
  Tensor<T> norm1_gamma, norm1_beta;
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<T> gate_w, gate_b;  // undefined when ungated
  Tensor<T> ls_attn;
  Tensor<T> norm2_gamma, norm2_beta;
  Tensor<T> w_up, w_gate, w_down;
  Tensor<T> ls_ffn;
};

template <typename T>
struct ModelParameters {
  Tensor<T> patch_w, patch_b;
  Tensor<T> tok_embed;
  std::vector<BlockParameters<T>> blocks;
  Tensor<T> final_gamma, final_beta;
  Tensor<T> lm_head;
};

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
  bool decay;  // receives decoupled weight decay
};

/// Per-layer K/V rows (after rotary) for incremental decoding.
template <typename T>
struct KvCache {
  std::vector<Tensor<T>> keys;
  std::vector<Tensor<T>> values;

  std::size_t length() const { return keys.empty() || !keys[0].defined() ? 0 : keys[0].dim(0); }
};

struct ForwardOptions {
  bool train = false;
  std::mt19937_64* rng = nullptr;  // drop-path draws, train mode only
  /// When set, receives the post-softmax attention of every layer.
  std::vector<AttentionProbs>* attention = nullptr;
};

template <typename T>
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ModelParameters<T>& params() { return params_; }
  const ModelParameters<T>& params() const { return params_; }
  /// Declaration order; handles share storage with the model.
  std::vector<NamedParameter<T>> named_parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  Tensor<T> patch_embed(const Tensor<T>& patches) const;
  /// Input rows for every position of the sequence.
  Tensor<T> embed(const PackedSequence& seq) const;

  /// Attention of the normalized block input x, output-projected and gated.
  Tensor<T> gated_attention(std::size_t layer, const Tensor<T>& x, const AttentionMask& mask,
                            std::span<const PositionTriple> positions,
                            AttentionProbs* probs = nullptr, KvCache<T>* cache = nullptr) const;
  Tensor<T> feed_forward(std::size_t layer, const Tensor<T>& x) const;
  /// Residual block; drop path is drawn per sample (sample_ids) in train mode.
  Tensor<T> block_forward(std::size_t layer, const Tensor<T>& x, const AttentionMask& mask,
                          std::span<const PositionTriple> positions,
                          std::span<const std::int32_t> sample_ids, bool train,
                          std::mt19937_64* rng, AttentionProbs* probs = nullptr,
                          KvCache<T>* cache = nullptr) const;

  /// Final-LN hidden states [n, dim].
  Tensor<T> hidden_states(const PackedSequence& seq, const ForwardOptions& options = {}) const;
  Tensor<T> lm_logits(const Tensor<T>& hidden) const;
  /// Logits [n, vocab] at every position.
  Tensor<T> forward(const PackedSequence& seq, const ForwardOptions& options = {}) const;
  /// Image-only forward (full attention); final-LN features [patches, dim].
  Tensor<T> encode_image(const Patches& patches) const;

  /// Copies values (cast to T) from named tensors, e.g. a loaded checkpoint.
  void load_values(const std::vector<std::pair<std::string, std::vector<float>>>& named);

 private:
  ModelConfig config_;
  ModelParameters<T> params_;
};

// ---------------------------------------------------------------------------
// Files: checkpoints and feature dumps (little-endian float32).

struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  ModelConfig config;
  nlohmann::json meta;  // preprocessing, stage, step, ...
  std::vector<StoredTensor> tensors;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model,
                     const nlohmann::json& meta = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);
template <typename T>
Model<T> model_from_checkpoint(const Checkpoint& ckpt);

void write_tensor_dump(const std::filesystem::path& path, const Shape& shape,
                       std::span<const float> values);
StoredTensor read_tensor_dump(const std::filesystem::path& path);

/// Stream helpers shared by the on-disk formats.
void write_u32(std::ostream& out, std::uint32_t v);
std::uint32_t read_u32(std::istream& in);
void write_f32s(std::ostream& out, std::span<const float> values);
std::vector<float> read_f32s(std::istream& in, std::size_t count);

}  // namespace genlip
