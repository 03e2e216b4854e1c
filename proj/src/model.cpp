// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "genlip/model.hpp"

#include <cmath>
#include <map>

#include "genlip/errors.hpp"

namespace genlip {

// ---------------------------------------------------------------------------
// ModelConfig

MropeSections ModelConfig::default_sections(std::size_t head_dim) {
  const std::size_t half = head_dim / 2;
  const std::size_t h = half * 3 / 8;
  const std::size_t w = half * 3 / 8;
  return {half - h - w, h, w};
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.layers = 4;
  c.dim = 128;
  c.heads = 4;
  c.ffn_width = 352;
  c.vocab = 258;
  c.patch_size = 16;
  c.mrope_sections = default_sections(c.head_dim());
  c.max_tokens = 4096;
  return c;
}

ModelConfig ModelConfig::paper_l() {
  ModelConfig c;
  c.layers = 24;
  c.dim = 1024;
  c.heads = 16;
  c.ffn_width = 2816;
  c.vocab = 258;
  c.patch_size = 16;
  c.mrope_sections = default_sections(c.head_dim());
  c.drop_path_rate = 0.1;
  c.max_tokens = 16384;
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  if (name == "tiny") return tiny();
  if (name == "paper-l") return paper_l();
  throw ConfigError("unknown model preset '" + name + "' (expected tiny or paper-l)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (layers == 0 || dim == 0 || heads == 0 || ffn_width == 0 || patch_size == 0 ||
      max_tokens == 0) {
    fail("layers, dim, heads, ffn_width, patch_size and max_tokens must be positive");
  }
  if (dim % heads != 0) fail("dim " + std::to_string(dim) + " not divisible by heads " +
                             std::to_string(heads));
  if (head_dim() % 2 != 0) fail("head_dim must be even");
  if (mrope_sections[0] + mrope_sections[1] + mrope_sections[2] != head_dim() / 2) {
    fail("mrope_sections must sum to head_dim/2 = " + std::to_string(head_dim() / 2));
  }
  if (vocab < 258) fail("vocab must hold 256 bytes plus EOS and PAD");
  if (!(rope_theta > 1.0)) fail("rope_theta must exceed 1");
  if (!(layer_scale_init > 0.0)) fail("layer_scale_init must be positive");
  if (!(drop_path_rate >= 0.0 && drop_path_rate < 1.0)) fail("drop_path_rate must be in [0,1)");
  if (!(norm_eps > 0.0)) fail("norm_eps must be positive");
  if (!(init_std > 0.0)) fail("init_std must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"layers", c.layers},
                     {"dim", c.dim},
                     {"heads", c.heads},
                     {"ffn_width", c.ffn_width},
                     {"vocab", c.vocab},
                     {"patch_size", c.patch_size},
                     {"rope_theta", c.rope_theta},
                     {"mrope_sections", c.mrope_sections},
                     {"layer_scale_init", c.layer_scale_init},
                     {"drop_path_rate", c.drop_path_rate},
                     {"max_tokens", c.max_tokens},
                     {"gated", c.gated},
                     {"norm_eps", c.norm_eps},
                     {"init_std", c.init_std}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig base;
  if (j.contains("preset")) base = ModelConfig::preset(j.at("preset").get<std::string>());
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  c = base;
  get("layers", c.layers);
  get("dim", c.dim);
  get("heads", c.heads);
  get("ffn_width", c.ffn_width);
  get("vocab", c.vocab);
  get("patch_size", c.patch_size);
  get("rope_theta", c.rope_theta);
  if (j.contains("mrope_sections")) {
    j.at("mrope_sections").get_to(c.mrope_sections);
  } else if (j.contains("dim") || j.contains("heads")) {
    c.mrope_sections = ModelConfig::default_sections(c.head_dim());
  }
  get("layer_scale_init", c.layer_scale_init);
  get("drop_path_rate", c.drop_path_rate);
  get("max_tokens", c.max_tokens);
  get("gated", c.gated);
  get("norm_eps", c.norm_eps);
  get("init_std", c.init_std);
}

// ---------------------------------------------------------------------------
// Initialization

namespace {

template <typename T>
class Initializer {
 public:
  Initializer(std::uint64_t seed, double stddev) : rng_(seed), stddev_(stddev) {}

  // Normal(0, std) truncated to two standard deviations by resampling.
  Tensor<T> trunc_normal(const Shape& shape) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) {
      double z = normal(rng_);
      while (std::abs(z) > 2.0) z = normal(rng_);
      x = static_cast<T>(z * stddev_);
    }
    return Tensor<T>::from_data(shape, std::move(v), true);
  }
  Tensor<T> constant(const Shape& shape, double value) {
    return Tensor<T>::full(shape, static_cast<T>(value), true);
  }

 private:
  std::mt19937_64 rng_;
  double stddev_;
};

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t d = config_.dim, f = config_.ffn_width;
  Initializer<T> init(seed, config_.init_std);
  params_.patch_w = init.trunc_normal({config_.patch_width(), d});
  params_.patch_b = init.constant({d}, 0.0);
  params_.tok_embed = init.trunc_normal({config_.vocab, d});
  params_.blocks.resize(config_.layers);
  for (auto& b : params_.blocks) {
    b.norm1_gamma = init.constant({d}, 1.0);
    b.norm1_beta = init.constant({d}, 0.0);
    b.wq = init.trunc_normal({d, d});
    b.bq = init.constant({d}, 0.0);
    b.wk = init.trunc_normal({d, d});
    b.bk = init.constant({d}, 0.0);
    b.wv = init.trunc_normal({d, d});
    b.bv = init.constant({d}, 0.0);
    b.wo = init.trunc_normal({d, d});
    b.bo = init.constant({d}, 0.0);
    // Drawn for ungated models too so both variants share every other weight.
    auto gate_w = init.trunc_normal({d, d});
    if (config_.gated) {
      b.gate_w = gate_w;
      b.gate_b = init.constant({d}, 0.0);
    }
    b.ls_attn = init.constant({d}, config_.layer_scale_init);
    b.norm2_gamma = init.constant({d}, 1.0);
    b.norm2_beta = init.constant({d}, 0.0);
    b.w_up = init.trunc_normal({d, f});
    b.w_gate = init.trunc_normal({d, f});
    b.w_down = init.trunc_normal({f, d});
    b.ls_ffn = init.constant({d}, config_.layer_scale_init);
  }
  params_.final_gamma = init.constant({d}, 1.0);
  params_.final_beta = init.constant({d}, 0.0);
  params_.lm_head = init.trunc_normal({d, config_.vocab});
}

template <typename T>
std::vector<NamedParameter<T>> Model<T>::named_parameters() const {
  std::vector<NamedParameter<T>> out;
  const auto& p = params_;
  out.push_back({"patch_embed.weight", p.patch_w, true});
  out.push_back({"patch_embed.bias", p.patch_b, false});
  out.push_back({"tok_embed.weight", p.tok_embed, true});
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const auto& b = p.blocks[i];
    const std::string pre = "blocks." + std::to_string(i) + ".";
    out.push_back({pre + "norm1.gamma", b.norm1_gamma, false});
    out.push_back({pre + "norm1.beta", b.norm1_beta, false});
    out.push_back({pre + "attn.wq", b.wq, true});
    out.push_back({pre + "attn.bq", b.bq, false});
    out.push_back({pre + "attn.wk", b.wk, true});
    out.push_back({pre + "attn.bk", b.bk, false});
    out.push_back({pre + "attn.wv", b.wv, true});
    out.push_back({pre + "attn.bv", b.bv, false});
    out.push_back({pre + "attn.wo", b.wo, true});
    out.push_back({pre + "attn.bo", b.bo, false});
    if (config_.gated) {
      out.push_back({pre + "gate.weight", b.gate_w, false});
      out.push_back({pre + "gate.bias", b.gate_b, false});
    }
    out.push_back({pre + "ls_attn", b.ls_attn, false});
    out.push_back({pre + "norm2.gamma", b.norm2_gamma, false});
    out.push_back({pre + "norm2.beta", b.norm2_beta, false});
    out.push_back({pre + "ffn.w_up", b.w_up, true});
    out.push_back({pre + "ffn.w_gate", b.w_gate, true});
    out.push_back({pre + "ffn.w_down", b.w_down, true});
    out.push_back({pre + "ls_ffn", b.ls_ffn, false});
  }
  out.push_back({"final_norm.gamma", p.final_gamma, false});
  out.push_back({"final_norm.beta", p.final_beta, false});
  out.push_back({"lm_head.weight", p.lm_head, true});
  return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named_parameters()) n += p.tensor.numel();
  return n;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : named_parameters()) p.tensor.zero_grad();
}

// ---------------------------------------------------------------------------
// Forward

template <typename T>
Tensor<T> Model<T>::patch_embed(const Tensor<T>& patches) const {
  if (patches.rank() != 2 || patches.dim(1) != config_.patch_width()) {
    throw DimensionError("patch_embed: expected [N," + std::to_string(config_.patch_width()) +
                         "] patch vectors, got " + shape_to_string(patches.shape()));
  }
  return linear(patches, params_.patch_w, params_.patch_b);
}

template <typename T>
Tensor<T> Model<T>::embed(const PackedSequence& seq) const {
  const std::size_t n_patch = seq.patch_count();
  if (seq.patch_width != config_.patch_width() && n_patch > 0) {
    throw DimensionError("embed: patch width " + std::to_string(seq.patch_width) +
                         " does not match the model's " + std::to_string(config_.patch_width()));
  }
  std::vector<std::int32_t> text_ids;
  std::vector<std::size_t> order(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.kinds[i] == TokenKind::Image) {
      order[i] = static_cast<std::size_t>(seq.token_ids[i]);
    } else {
      order[i] = n_patch + text_ids.size();
      text_ids.push_back(seq.token_ids[i]);
    }
  }
  Tensor<T> rows;
  if (n_patch > 0) {
    std::vector<T> pv(seq.patches.begin(), seq.patches.end());
    rows = patch_embed(Tensor<T>::from_data({n_patch, seq.patch_width}, std::move(pv)));
  }
  if (!text_ids.empty()) {
    auto te = embedding(params_.tok_embed, text_ids);
    rows = rows.defined() ? concat_rows(rows, te) : te;
  }
  if (!rows.defined()) throw DataError("embed: empty sequence");
  return gather_rows(rows, order);
}

template <typename T>
Tensor<T> Model<T>::gated_attention(std::size_t layer, const Tensor<T>& x,
                                    const AttentionMask& mask,
                                    std::span<const PositionTriple> positions,
                                    AttentionProbs* probs, KvCache<T>* cache) const {
  const auto& b = params_.blocks.at(layer);
  const std::size_t heads = config_.heads;
  auto q = apply_mrope(linear(x, b.wq, b.bq), heads, positions, config_.mrope_sections,
                       config_.rope_theta);
  auto k = apply_mrope(linear(x, b.wk, b.bk), heads, positions, config_.mrope_sections,
                       config_.rope_theta);
  auto v = linear(x, b.wv, b.bv);
  if (cache) {
    if (cache->keys.size() < config_.layers) {
      cache->keys.resize(config_.layers);
      cache->values.resize(config_.layers);
    }
    if (cache->keys[layer].defined()) {
      k = concat_rows(cache->keys[layer], k);
      v = concat_rows(cache->values[layer], v);
    }
    cache->keys[layer] = k;
    cache->values[layer] = v;
  }
  auto a = linear(masked_attention(q, k, v, heads, mask, probs), b.wo, b.bo);
  if (!config_.gated) return a;
  return mul(sigmoid(linear(x, b.gate_w, b.gate_b)), a);
}

template <typename T>
Tensor<T> Model<T>::feed_forward(std::size_t layer, const Tensor<T>& x) const {
  const auto& b = params_.blocks.at(layer);
  return matmul(mul(silu(matmul(x, b.w_gate)), matmul(x, b.w_up)), b.w_down);
}

namespace {

// Per-row survival scaling, one Bernoulli draw per sample id.
template <typename T>
std::vector<T> drop_path_factors(std::span<const std::int32_t> sample_ids, double rate,
                                 std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<T> f(sample_ids.size());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  T current = 0;
  for (std::size_t i = 0; i < sample_ids.size(); ++i) {
    if (i == 0 || sample_ids[i] != sample_ids[i - 1]) {
      current = u(rng) < 1.0 - rate ? keep_scale : T(0);
    }
    f[i] = current;
  }
  return f;
}

}  // namespace

template <typename T>
Tensor<T> Model<T>::block_forward(std::size_t layer, const Tensor<T>& x,
                                  const AttentionMask& mask,
                                  std::span<const PositionTriple> positions,
                                  std::span<const std::int32_t> sample_ids, bool train,
                                  std::mt19937_64* rng, AttentionProbs* probs,
                                  KvCache<T>* cache) const {
  const auto& b = params_.blocks.at(layer);
  const T eps = static_cast<T>(config_.norm_eps);
  const bool drop = train && config_.drop_path_rate > 0.0;
  if (drop && (!rng || sample_ids.size() != x.dim(0))) {
    throw std::invalid_argument("block_forward: train mode needs an rng and one sample id per row");
  }
  auto branch = mul_rowvec(gated_attention(layer, layer_norm(x, b.norm1_gamma, b.norm1_beta, eps),
                                           mask, positions, probs, cache),
                           b.ls_attn);
  if (drop) branch = scale_rows<T>(branch, drop_path_factors<T>(sample_ids, config_.drop_path_rate, *rng));
  auto h = add(x, branch);
  auto ffn = mul_rowvec(feed_forward(layer, layer_norm(h, b.norm2_gamma, b.norm2_beta, eps)),
                        b.ls_ffn);
  if (drop) ffn = scale_rows<T>(ffn, drop_path_factors<T>(sample_ids, config_.drop_path_rate, *rng));
  return add(h, ffn);
}

template <typename T>
Tensor<T> Model<T>::hidden_states(const PackedSequence& seq, const ForwardOptions& options) const {
  if (seq.size() > config_.max_tokens) {
    throw DataError("forward: " + std::to_string(seq.size()) + " tokens exceed the context budget of " +
                    std::to_string(config_.max_tokens));
  }
  validate(seq);
  const AttentionMask mask = prefix_lm_mask(seq);
  if (options.attention) options.attention->assign(config_.layers, {});
  auto x = embed(seq);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    x = block_forward(l, x, mask, seq.positions, seq.sample_ids, options.train, options.rng,
                      options.attention ? &(*options.attention)[l] : nullptr);
  }
  return layer_norm(x, params_.final_gamma, params_.final_beta, static_cast<T>(config_.norm_eps));
}

template <typename T>
Tensor<T> Model<T>::lm_logits(const Tensor<T>& hidden) const {
  return matmul(hidden, params_.lm_head);
}

template <typename T>
Tensor<T> Model<T>::forward(const PackedSequence& seq, const ForwardOptions& options) const {
  return lm_logits(hidden_states(seq, options));
}

template <typename T>
Tensor<T> Model<T>::encode_image(const Patches& patches) const {
  return hidden_states(build_sequence(patches, {}, 0));
}

template <typename T>
void Model<T>::load_values(const std::vector<std::pair<std::string, std::vector<float>>>& named) {
  std::map<std::string, const std::vector<float>*> by_name;
  for (const auto& [name, values] : named) by_name[name] = &values;
  auto params = named_parameters();
  if (params.size() != named.size()) {
    throw FormatError("checkpoint holds " + std::to_string(named.size()) +
                      " tensors, model expects " + std::to_string(params.size()));
  }
  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing tensor " + p.name);
    if (it->second->size() != p.tensor.numel()) {
      throw FormatError("checkpoint tensor " + p.name + " has " +
                        std::to_string(it->second->size()) + " values, expected " +
                        std::to_string(p.tensor.numel()));
    }
    auto dst = p.tensor.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>((*it->second)[i]);
  }
}

template class Model<float>;
template class Model<double>;

}  // namespace genlip
