// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration file: model, training, data source, output directory and
// numeric precision in one JSON document.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "genlip/model.hpp"
#include "genlip/train.hpp"

namespace genlip {

enum class Precision : std::uint8_t { F32, F64 };

std::string to_string(Precision p);
Precision parse_precision(const std::string& text);

struct SynthSource {
  std::uint64_t seed = 0;
  std::size_t count = 32;
  SynthOptions options;

  bool operator==(const SynthSource& o) const {
    return seed == o.seed && count == o.count && options.min_side == o.options.min_side &&
           options.max_side == o.options.max_side;
  }
};

/// Either a JSONL manifest or an in-memory synthetic set.
struct DataSource {
  std::optional<std::filesystem::path> manifest;
  std::optional<SynthSource> synth;

  bool operator==(const DataSource&) const = default;
};

struct RunConfig {
  ModelConfig model = ModelConfig::tiny();
  TrainConfig train;
  DataSource data;
  std::filesystem::path output_dir = "runs/default";
  Precision precision = Precision::F32;

  /// Throws ConfigError; with check_paths, also requires the manifest to exist.
  void validate(bool check_paths = true) const;
  bool operator==(const RunConfig&) const = default;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

/// Dataset named by the config, in manifest (or generation) order.
std::vector<ImageSample> load_samples(const DataSource& source);

}  // namespace genlip
