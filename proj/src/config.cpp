// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "genlip/config.hpp"

#include <fstream>

#include "genlip/errors.hpp"

namespace genlip {

std::string to_string(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& text) {
  if (text == "f32" || text == "32") return Precision::F32;
  if (text == "f64" || text == "64") return Precision::F64;
  throw ConfigError("unknown precision '" + text + "' (expected f32 or f64)");
}

void RunConfig::validate(bool check_paths) const {
  model.validate();
  train.validate();
  if (data.manifest.has_value() == data.synth.has_value()) {
    throw ConfigError("run config: data needs exactly one of 'manifest' or 'synth'");
  }
  if (data.synth && data.synth->count == 0) throw ConfigError("run config: synth count must be positive");
  if (check_paths && data.manifest && !std::filesystem::exists(*data.manifest)) {
    throw ConfigError("run config: manifest " + data.manifest->string() + " does not exist");
  }
  if (output_dir.empty()) throw ConfigError("run config: output_dir is empty");
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  nlohmann::json data = nlohmann::json::object();
  if (c.data.manifest) data["manifest"] = c.data.manifest->string();
  if (c.data.synth) {
    data["synth"] = {{"seed", c.data.synth->seed},
                     {"count", c.data.synth->count},
                     {"min_side", c.data.synth->options.min_side},
                     {"max_side", c.data.synth->options.max_side}};
  }
  j = {{"format", "genlip-run v1"},
       {"model", c.model},
       {"train", c.train},
       {"data", data},
       {"output_dir", c.output_dir.string()},
       {"precision", to_string(c.precision)}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  c = RunConfig{};
  if (j.contains("format") && j.at("format") != "genlip-run v1") {
    throw ConfigError("run config: unsupported format " + j.at("format").dump());
  }
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("data")) {
    const auto& d = j.at("data");
    if (d.contains("manifest")) c.data.manifest = d.at("manifest").get<std::string>();
    if (d.contains("synth")) {
      const auto& s = d.at("synth");
      SynthSource src;
      src.seed = s.value("seed", src.seed);
      src.count = s.value("count", src.count);
      src.options.min_side = s.value("min_side", src.options.min_side);
      src.options.max_side = s.value("max_side", src.options.max_side);
      c.data.synth = src;
    }
  }
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("precision")) c.precision = parse_precision(j.at("precision").get<std::string>());
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  RunConfig c;
  try {
    nlohmann::json::parse(in).get_to(c);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  // Relative manifest paths are taken from the config file's directory.
  if (c.data.manifest && c.data.manifest->is_relative()) {
    c.data.manifest = path.parent_path() / *c.data.manifest;
  }
  return c;
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write config " + path.string());
  out << nlohmann::json(config).dump(2) << '\n';
}

std::vector<ImageSample> load_samples(const DataSource& source) {
  if (source.manifest) return load_manifest_samples(*source.manifest);
  if (source.synth) return synth_generate(source.synth->seed, source.synth->count, source.synth->options);
  throw ConfigError("run config: no data source");
}

}  // namespace genlip
