// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "genlip/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>
#include <random>

#include "genlip/errors.hpp"
#include "genlip/inference.hpp"

namespace genlip {

std::string to_string(Stage stage) { return stage == Stage::S1 ? "S1" : "S2"; }

Stage parse_stage(const std::string& text) {
  if (text == "S1" || text == "s1" || text == "1") return Stage::S1;
  if (text == "S2" || text == "s2" || text == "2") return Stage::S2;
  throw ConfigError("unknown stage '" + text + "' (expected S1 or S2)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  if (!(peak_lr > 0.0)) fail("peak_lr must be positive");
  if (!(min_lr >= 0.0 && min_lr <= peak_lr)) fail("min_lr must be in [0, peak_lr]");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    fail("betas must be in [0,1)");
  }
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) fail("warmup_ratio must be in [0,1)");
  if (!(grad_clip > 0.0)) fail("grad_clip must be positive");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (total_steps == 0) fail("total_steps must be at least 1");
  if (batch_tokens == 0 || pack_length == 0) fail("batch_tokens and pack_length must be positive");
  if (imaging.image_side == 0) fail("image_side must be positive");
  if (imaging.min_tokens == 0 || imaging.min_tokens > imaging.max_tokens) {
    fail("imaging token budget must satisfy 1 <= min_tokens <= max_tokens");
  }
}

void to_json(nlohmann::json& j, const ImagingConfig& c) {
  j = {{"image_side", c.image_side},
       {"min_tokens", c.min_tokens},
       {"max_tokens", c.max_tokens},
       {"pixel_mean", c.norm.mean},
       {"pixel_std", c.norm.std}};
}

void from_json(const nlohmann::json& j, ImagingConfig& c) {
  c = ImagingConfig{};
  if (j.contains("image_side")) j.at("image_side").get_to(c.image_side);
  if (j.contains("min_tokens")) j.at("min_tokens").get_to(c.min_tokens);
  if (j.contains("max_tokens")) j.at("max_tokens").get_to(c.max_tokens);
  if (j.contains("pixel_mean")) j.at("pixel_mean").get_to(c.norm.mean);
  if (j.contains("pixel_std")) j.at("pixel_std").get_to(c.norm.std);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"peak_lr", c.peak_lr},
       {"min_lr", c.min_lr},
       {"betas", {c.beta1, c.beta2}},
       {"adam_eps", c.adam_eps},
       {"warmup_ratio", c.warmup_ratio},
       {"grad_clip", c.grad_clip},
       {"weight_decay", c.weight_decay},
       {"total_steps", c.total_steps},
       {"batch_tokens", c.batch_tokens},
       {"pack_length", c.pack_length},
       {"stage", to_string(c.stage)},
       {"seed", c.seed},
       {"imaging", c.imaging},
       {"sink_every", c.sink_every},
       {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("peak_lr", c.peak_lr);
  get("min_lr", c.min_lr);
  if (j.contains("betas")) {
    const auto& b = j.at("betas");
    if (!b.is_array() || b.size() != 2) throw ConfigError("train config: betas must be [b1, b2]");
    b[0].get_to(c.beta1);
    b[1].get_to(c.beta2);
  }
  get("adam_eps", c.adam_eps);
  get("warmup_ratio", c.warmup_ratio);
  get("grad_clip", c.grad_clip);
  get("weight_decay", c.weight_decay);
  get("total_steps", c.total_steps);
  get("batch_tokens", c.batch_tokens);
  get("pack_length", c.pack_length);
  if (j.contains("stage")) c.stage = parse_stage(j.at("stage").get<std::string>());
  get("seed", c.seed);
  get("imaging", c.imaging);
  get("sink_every", c.sink_every);
  get("checkpoint_every", c.checkpoint_every);
}

double lr_at(double step, const TrainConfig& cfg) {
  const double total = static_cast<double>(cfg.total_steps);
  step = std::clamp(step, 0.0, total);
  const double warmup = cfg.warmup_ratio * total;
  if (step < warmup) return cfg.peak_lr * step / warmup;
  const double span = total - warmup;
  const double progress = span > 0.0 ? (step - warmup) / span : 1.0;
  return cfg.min_lr +
         0.5 * (cfg.peak_lr - cfg.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
ClipResult clip_global_norm(std::span<const NamedParameter<T>> params, double cap) {
  if (!(cap > 0.0)) throw ConfigError("clip_global_norm: cap must be positive");
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  ClipResult r;
  r.norm = std::sqrt(sq);
  if (r.norm > cap) {
    r.factor = cap / r.norm;
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      Tensor<T> t = p.tensor;
      for (T& g : t.mutable_grad()) g = static_cast<T>(g * r.factor);
    }
  }
  return r;
}

template <typename T>
void adamw_step(std::span<const NamedParameter<T>> params, OptimizerState<T>& state, double lr,
                const TrainConfig& cfg) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), T(0));
      state.v.emplace_back(p.tensor.numel(), T(0));
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adamw: optimizer state holds " + std::to_string(state.m.size()) +
                         " buffers for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].tensor.numel() ||
        state.v[i].size() != params[i].tensor.numel()) {
      throw DimensionError("adamw: moment shape mismatch for " + params[i].name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T> p = params[i].tensor;
    auto w = p.data();
    const bool has_grad = p.has_grad();
    const std::span<const T> g = has_grad ? p.grad() : std::span<const T>{};
    auto& m = state.m[i];
    auto& v = state.v[i];
    const double decay = params[i].decay ? lr * cfg.weight_decay : 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const T gk = has_grad ? g[k] : T(0);
      m[k] = b1 * m[k] + (T(1) - b1) * gk;
      v[k] = b2 * v[k] + (T(1) - b2) * gk * gk;
      const double mhat = static_cast<double>(m[k]) / bc1;
      const double vhat = static_cast<double>(v[k]) / bc2;
      double x = static_cast<double>(w[k]);
      if (decay != 0.0) x -= decay * x;
      x -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
      w[k] = static_cast<T>(x);
    }
  }
}

Patches prepare_image(const Image& img, Stage stage, const ImagingConfig& imaging,
                      std::size_t patch_size) {
  const Image resized = stage == Stage::S1
                            ? resize_fixed(img, imaging.image_side, patch_size)
                            : resize_native(img, imaging.min_tokens, imaging.max_tokens, patch_size);
  Patches p = patchify(resized, patch_size);
  normalize(p, imaging.norm);
  return p;
}

std::vector<EncodedSample> encode_samples(const std::vector<ImageSample>& samples, Stage stage,
                                          const ImagingConfig& imaging, std::size_t patch_size,
                                          const ByteTokenizer& tokenizer) {
  std::vector<EncodedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const Patches p = prepare_image(s.image, stage, imaging, patch_size);
    const auto ids = tokenizer.encode(s.caption);
    out.push_back({s.id, s.caption, build_sequence(p, ids, tokenizer.eos(), s.id)});
  }
  return out;
}

NonFiniteLoss::NonFiniteLoss(std::size_t step_, double loss)
    : std::runtime_error("non-finite loss " + std::to_string(loss) + " at step " +
                         std::to_string(step_)),
      step(step_) {}

// ---------------------------------------------------------------------------

template <typename T>
Trainer<T>::Trainer(Model<T>& model, std::vector<EncodedSample> data, TrainConfig cfg)
    : model_(model),
      data_(std::move(data)),
      cfg_(std::move(cfg)),
      params_(model.named_parameters()),
      pad_id_(ByteTokenizer(model.config().vocab).pad()) {
  cfg_.validate();
  if (data_.empty()) throw DataError("trainer: empty dataset");
  for (const auto& s : data_) {
    if (s.sequence.size() > cfg_.pack_length) {
      throw DataError("trainer: sample '" + s.id + "' has " + std::to_string(s.sequence.size()) +
                      " tokens, more than pack_length " + std::to_string(cfg_.pack_length));
    }
  }
  order_ = epoch_order(0);
}

template <typename T>
std::vector<std::size_t> Trainer<T>::epoch_order(std::uint64_t epoch) const {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg_.seed), static_cast<std::uint32_t>(cfg_.seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32),
                    0x0badu};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(data_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

template <typename T>
std::vector<std::size_t> Trainer<T>::next_batch() {
  if (state_.offset >= order_.size()) {
    ++state_.epoch;
    state_.offset = 0;
    order_ = epoch_order(state_.epoch);
  }
  std::vector<std::size_t> batch;
  std::size_t tokens = 0;
  while (state_.offset < order_.size()) {
    const std::size_t idx = order_[state_.offset];
    const std::size_t len = data_[idx].sequence.size();
    if (!batch.empty() && tokens + len > cfg_.batch_tokens) break;
    batch.push_back(idx);
    tokens += len;
    ++state_.offset;
  }
  return batch;
}

template <typename T>
StepMetrics Trainer<T>::step() {
  const std::uint64_t step_no = state_.step + 1;
  const auto batch = next_batch();
  std::vector<PackedSequence> seqs;
  seqs.reserve(batch.size());
  for (std::size_t idx : batch) seqs.push_back(data_[idx].sequence);
  const auto packs = pack(seqs, cfg_.pack_length, pad_id_);

  std::size_t total_supervised = 0;
  for (const auto& p : packs) total_supervised += p.supervised_count();
  if (total_supervised == 0) {
    throw DataError("trainer: step " + std::to_string(step_no) + " has no caption tokens");
  }

  std::seed_seq seed{static_cast<std::uint32_t>(cfg_.seed), static_cast<std::uint32_t>(cfg_.seed >> 32),
                     static_cast<std::uint32_t>(step_no), static_cast<std::uint32_t>(step_no >> 32),
                     0xd9u};
  std::mt19937_64 rng(seed);
  ForwardOptions options;
  options.train = true;
  options.rng = &rng;

  model_.zero_grad();
  double loss = 0.0;
  std::size_t tokens = 0;
  for (const auto& p : packs) {
    tokens += p.size();
    const std::size_t count = p.supervised_count();
    if (count == 0) continue;
    const auto targets = p.targets();
    const auto logits = model_.forward(p, options);
    const auto ce = cross_entropy_masked(logits, targets, p.loss_mask);
    const double weight = static_cast<double>(count) / static_cast<double>(total_supervised);
    loss += weight * static_cast<double>(ce.item());
    backward(scale(ce, static_cast<T>(weight)));
  }
  if (!std::isfinite(loss)) throw NonFiniteLoss(step_no, loss);

  StepMetrics m;
  m.step = step_no;
  m.loss = loss;
  m.samples = batch.size();
  m.tokens = tokens;
  const ClipResult clip = clip_global_norm<T>(params_, cfg_.grad_clip);
  m.grad_norm = clip.norm;
  m.clip_factor = clip.factor;
  m.lr = lr_at(static_cast<double>(step_no), cfg_);
  adamw_step<T>(params_, opt_, m.lr, cfg_);
  model_.zero_grad();
  state_.step = step_no;
  if (cfg_.sink_every > 0 && (step_no % cfg_.sink_every == 0 || done())) {
    m.sink_mass_mean = probe_sink_mass();
  }
  return m;
}

template <typename T>
double Trainer<T>::evaluate_loss() const {
  NoGradGuard no_grad;
  std::vector<PackedSequence> seqs;
  seqs.reserve(data_.size());
  for (const auto& s : data_) seqs.push_back(s.sequence);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& p : pack(seqs, cfg_.pack_length, pad_id_)) {
    const std::size_t c = p.supervised_count();
    if (c == 0) continue;
    const auto ce = cross_entropy_masked(model_.forward(p), p.targets(), p.loss_mask);
    total += static_cast<double>(ce.item()) * static_cast<double>(c);
    count += c;
  }
  if (count == 0) throw DataError("evaluate_loss: dataset has no caption tokens");
  return total / static_cast<double>(count);
}

template <typename T>
double Trainer<T>::probe_sink_mass() const {
  return sink_mass(model_, data_.front().sequence).mean;
}

// Optimizer blob:
//   "GENLIPOS" | version | element size | step, epoch, offset, adam step (u64 as
//   two u32) | parameter count | per parameter: name, numel, m bytes, v bytes
namespace {

constexpr char kStateMagic[8] = {'G', 'E', 'N', 'L', 'I', 'P', 'O', 'S'};
constexpr std::uint32_t kStateVersion = 1;

void write_u64(std::ostream& out, std::uint64_t v) {
  write_u32(out, static_cast<std::uint32_t>(v));
  write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint64_t read_u64(std::istream& in) {
  const std::uint64_t lo = read_u32(in);
  return lo | static_cast<std::uint64_t>(read_u32(in)) << 32;
}

template <typename T>
void write_values(std::ostream& out, const std::vector<T>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
void read_values(std::istream& in, std::vector<T>& v) {
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  if (!in) throw FormatError("optimizer state: truncated moments");
}

}  // namespace

template <typename T>
void Trainer<T>::save_state(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("optimizer state: cannot write " + path.string());
  out.write(kStateMagic, 8);
  write_u32(out, kStateVersion);
  write_u32(out, sizeof(T));
  write_u64(out, state_.step);
  write_u64(out, state_.epoch);
  write_u64(out, state_.offset);
  write_u64(out, opt_.step);
  write_u32(out, static_cast<std::uint32_t>(params_.size()));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& name = params_[i].name;
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const std::size_t n = params_[i].tensor.numel();
    write_u32(out, static_cast<std::uint32_t>(n));
    write_values(out, opt_.m.empty() ? std::vector<T>(n, T(0)) : opt_.m[i]);
    write_values(out, opt_.v.empty() ? std::vector<T>(n, T(0)) : opt_.v[i]);
  }
  if (!out) throw DataError("optimizer state: write failed for " + path.string());
}

template <typename T>
void Trainer<T>::load_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("optimizer state: cannot open " + path.string());
  char magic[8] = {};
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kStateMagic, 8) != 0) {
    throw FormatError(path.string() + ": not an optimizer state file");
  }
  if (read_u32(in) != kStateVersion) throw FormatError(path.string() + ": unsupported version");
  const std::uint32_t elem = read_u32(in);
  if (elem != sizeof(T)) {
    throw FormatError(path.string() + ": stored with " + std::to_string(elem * 8) +
                      "-bit moments, trainer runs " + std::to_string(sizeof(T) * 8) + "-bit");
  }
  Cursor cursor;
  cursor.step = read_u64(in);
  cursor.epoch = read_u64(in);
  cursor.offset = read_u64(in);
  OptimizerState<T> opt;
  opt.step = read_u64(in);
  if (read_u32(in) != params_.size()) throw FormatError(path.string() + ": parameter count differs");
  for (const auto& p : params_) {
    const std::uint32_t len = read_u32(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in || name != p.name) throw FormatError(path.string() + ": expected parameter " + p.name);
    if (read_u32(in) != p.tensor.numel()) throw FormatError(path.string() + ": size differs for " + p.name);
    opt.m.emplace_back(p.tensor.numel());
    opt.v.emplace_back(p.tensor.numel());
    read_values(in, opt.m.back());
    read_values(in, opt.v.back());
  }
  state_ = cursor;
  opt_ = std::move(opt);
  order_ = epoch_order(state_.epoch);
}

// ---------------------------------------------------------------------------

MetricsLog::MetricsLog(const std::filesystem::path& path) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  out_.open(path, std::ios::app);
  if (!out_) throw DataError("metrics: cannot open " + path.string());
  if (fresh) out_ << "# genlip-metrics v1\nstep,loss,lr,grad_norm,clip_factor,sink_mass_mean\n";
  out_.precision(9);
}

void MetricsLog::append(const StepMetrics& m) {
  out_ << m.step << ',' << m.loss << ',' << m.lr << ',' << m.grad_norm << ',' << m.clip_factor
       << ',';
  if (m.sink_mass_mean) out_ << *m.sink_mass_mean;
  out_ << '\n';
  out_.flush();
}

template <typename T>
std::vector<StepMetrics> train_stage(Trainer<T>& trainer, MetricsLog* log,
                                     const std::function<void(const StepMetrics&)>& on_step) {
  std::vector<StepMetrics> history;
  while (!trainer.done()) {
    history.push_back(trainer.step());
    if (log) log->append(history.back());
    if (on_step) on_step(history.back());
  }
  return history;
}

#define GENLIP_INSTANTIATE(T)                                                                  \
  template ClipResult clip_global_norm<T>(std::span<const NamedParameter<T>>, double);         \
  template void adamw_step<T>(std::span<const NamedParameter<T>>, OptimizerState<T>&, double,  \
                              const TrainConfig&);                                             \
  template class Trainer<T>;                                                                   \
  template std::vector<StepMetrics> train_stage<T>(Trainer<T>&, MetricsLog*,                   \
                                                   const std::function<void(const StepMetrics&)>&);

GENLIP_INSTANTIATE(float)
GENLIP_INSTANTIATE(double)

#undef GENLIP_INSTANTIATE

}  // namespace genlip
