// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Text-only autoregressive training: warmup-cosine AdamW over packed
// image-caption sequences, for the fixed-resolution stage (S1) and the
// native-aspect-ratio stage (S2).

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "genlip/image.hpp"
#include "genlip/model.hpp"
#include "genlip/sequence.hpp"
#include "genlip/tokenizer.hpp"

namespace genlip {

enum class Stage : std::uint8_t { S1, S2 };

std::string to_string(Stage stage);
Stage parse_stage(const std::string& text);

struct ImagingConfig {
  std::size_t image_side = 224;  // S1 square side
  std::size_t min_tokens = 16;   // S2 budget
  std::size_t max_tokens = 1024;
  PixelNorm norm;

  bool operator==(const ImagingConfig&) const = default;
};

struct TrainConfig {
  double peak_lr = 1e-3;
  double min_lr = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  double warmup_ratio = 0.007;
  double grad_clip = 1.0;
  double weight_decay = 0.1;
  std::size_t total_steps = 1000;
  /// Sequence tokens consumed per optimization step.
  std::size_t batch_tokens = 16384;
  /// Length every pack is padded to.
  std::size_t pack_length = 16384;
  Stage stage = Stage::S1;
  std::uint64_t seed = 0;
  ImagingConfig imaging;
  std::size_t sink_every = 50;  // 0 disables sink diagnostics
  std::size_t checkpoint_every = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const ImagingConfig& c);
void from_json(const nlohmann::json& j, ImagingConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Linear warmup from 0 to peak over warmup_ratio * total_steps, then cosine
/// decay to min_lr at total_steps.
double lr_at(double step, const TrainConfig& cfg);

struct ClipResult {
  double norm = 0.0;    // global L2 norm before clipping
  double factor = 1.0;  // multiplier applied to every gradient
};

template <typename T>
ClipResult clip_global_norm(std::span<const NamedParameter<T>> params, double cap);

template <typename T>
struct OptimizerState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;
};

/// Decoupled weight decay (only where NamedParameter::decay) then a
/// bias-corrected Adam update. Missing gradients count as zero.
template <typename T>
void adamw_step(std::span<const NamedParameter<T>> params, OptimizerState<T>& state, double lr,
                const TrainConfig& cfg);

// ---------------------------------------------------------------------------

/// Resize for the stage, patchify and normalize.
Patches prepare_image(const Image& img, Stage stage, const ImagingConfig& imaging,
                      std::size_t patch_size);

struct EncodedSample {
  std::string id;
  std::string caption;
  PackedSequence sequence;  // single sample, unpadded
};

std::vector<EncodedSample> encode_samples(const std::vector<ImageSample>& samples, Stage stage,
                                          const ImagingConfig& imaging, std::size_t patch_size,
                                          const ByteTokenizer& tokenizer);

struct StepMetrics {
  std::size_t step = 0;  // 1-based index of the completed optimization step
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  double clip_factor = 1.0;
  std::optional<double> sink_mass_mean;
  std::size_t samples = 0;
  std::size_t tokens = 0;
};

/// Raised when the loss stops being finite.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::size_t step, double loss);
  std::size_t step;
};

template <typename T>
class Trainer {
 public:
  Trainer(Model<T>& model, std::vector<EncodedSample> data, TrainConfig cfg);

  /// Runs one optimization step.
  StepMetrics step();
  bool done() const { return state_.step >= cfg_.total_steps; }
  std::uint64_t steps_done() const { return state_.step; }

  /// Eval-mode mean masked loss over the whole dataset.
  double evaluate_loss() const;
  /// Mean first-token attention mass on the first training sample.
  double probe_sink_mass() const;

  const TrainConfig& config() const { return cfg_; }
  Model<T>& model() { return model_; }

  /// Optimizer moments plus data cursor ("GENLIPOS" blob).
  void save_state(const std::filesystem::path& path) const;
  void load_state(const std::filesystem::path& path);

 private:
  std::vector<std::size_t> epoch_order(std::uint64_t epoch) const;
  std::vector<std::size_t> next_batch();

  Model<T>& model_;
  std::vector<EncodedSample> data_;
  TrainConfig cfg_;
  std::vector<NamedParameter<T>> params_;
  OptimizerState<T> opt_;
  struct Cursor {
    std::uint64_t step = 0;
    std::uint64_t epoch = 0;
    std::uint64_t offset = 0;
  } state_;
  std::vector<std::size_t> order_;
  std::int32_t pad_id_;
};

/// Append-only CSV: step,loss,lr,grad_norm,clip_factor,sink_mass_mean.
/// The first line of a new file is a "# genlip-metrics v1" tag.
class MetricsLog {
 public:
  explicit MetricsLog(const std::filesystem::path& path);
  void append(const StepMetrics& m);

 private:
  std::ofstream out_;
};

/// Runs the trainer to completion, logging every step and invoking on_step
/// (e.g. for checkpoints) after each one.
template <typename T>
std::vector<StepMetrics> train_stage(Trainer<T>& trainer, MetricsLog* log,
                                     const std::function<void(const StepMetrics&)>& on_step = {});

}  // namespace genlip
