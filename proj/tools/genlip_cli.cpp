// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

// genlip: dataset synthesis, two-stage training, captioning, patch readout,
// sink diagnostics, feature export and pack inspection.
//
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "genlip/config.hpp"
#include "genlip/errors.hpp"
#include "genlip/inference.hpp"

namespace fs = std::filesystem;
using namespace genlip;

namespace {

constexpr int kDomainError = 1;
constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::uint64_t seed = 0;
  std::size_t count = 32;
  std::size_t min_side = 48;
  std::size_t max_side = 160;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  if (a.min_side == 0 || a.min_side > a.max_side) throw UsageError("need 0 < --min-side <= --max-side");
  const fs::path root(a.out);
  fs::create_directories(root / "images");
  const auto samples = synth_generate(a.seed, a.count, {a.min_side, a.max_side});
  std::vector<ManifestRecord> records;
  for (const auto& s : samples) {
    const std::string rel = "images/" + s.id + ".png";
    write_png(root / rel, s.image);
    records.push_back({s.id, rel, s.caption});
  }
  write_manifest(root / "manifest.jsonl", records);
  std::cout << "wrote " << samples.size() << " samples to " << (root / "manifest.jsonl").string()
            << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// Checkpoint helpers

ImagingConfig imaging_of(const Checkpoint& ckpt) {
  if (ckpt.meta.contains("imaging")) return ckpt.meta.at("imaging").get<ImagingConfig>();
  return {};
}

Stage stage_of(const Checkpoint& ckpt) {
  if (ckpt.meta.contains("stage")) return parse_stage(ckpt.meta.at("stage").get<std::string>());
  return Stage::S1;
}

bool wants_f64(const Checkpoint& ckpt) {
  return ckpt.meta.value("precision", std::string("f32")) == "f64";
}

// ---------------------------------------------------------------------------
// train

/// Stage-2 peak lr relative to the configured (stage-1) peak.
constexpr double kStage2LrScale = 0.1;

struct TrainArgs {
  std::string config;
  std::string stage = "s1";
  bool resume = false;
  bool from_scratch = false;
  std::string init;
  std::string out;
  std::size_t steps = 0;
  double lr = 0.0;
  std::int64_t seed = -1;
};

template <typename T>
int run_train(const RunConfig& rc, Stage stage, const TrainArgs& a) {
  TrainConfig tc = rc.train;
  tc.stage = stage;
  const fs::path dir = rc.output_dir / (stage == Stage::S1 ? "s1" : "s2");
  fs::create_directories(dir);
  save_run_config(dir / "run.json", rc);

  Model<T> model(rc.model, tc.seed);
  fs::path init_ckpt;
  if (a.resume) {
    init_ckpt = dir / "last.ckpt";
    if (!fs::exists(init_ckpt)) throw DataError("--resume: no checkpoint at " + init_ckpt.string());
  } else if (!a.init.empty()) {
    init_ckpt = a.init;
  } else if (stage == Stage::S2 && !a.from_scratch) {
    init_ckpt = rc.output_dir / "s1" / "final.ckpt";
    if (!fs::exists(init_ckpt)) {
      throw DataError("stage S2 needs a stage S1 checkpoint (" + init_ckpt.string() +
                      "); pass --init or --from-scratch");
    }
  }
  if (!init_ckpt.empty()) {
    const Checkpoint ckpt = load_checkpoint(init_ckpt);
    if (!(ckpt.config == rc.model)) {
      throw ConfigError(init_ckpt.string() + ": model config differs from the run config");
    }
    model = model_from_checkpoint<T>(ckpt);
    std::cerr << "loaded " << init_ckpt.string() << '\n';
  }

  const ByteTokenizer tokenizer(rc.model.vocab);
  const auto samples = load_samples(rc.data);
  auto data = encode_samples(samples, stage, tc.imaging, rc.model.patch_size, tokenizer);
  Trainer<T> trainer(model, std::move(data), tc);
  if (a.resume) trainer.load_state(dir / "last.state");

  const nlohmann::json meta_base = {{"stage", to_string(stage)},
                                    {"imaging", tc.imaging},
                                    {"precision", to_string(rc.precision)},
                                    {"train", tc}};
  auto save = [&](const fs::path& path, std::size_t step) {
    nlohmann::json meta = meta_base;
    meta["step"] = step;
    save_checkpoint(path, model, meta);
  };
  MetricsLog log(dir / "metrics.csv");
  train_stage<T>(trainer, &log, [&](const StepMetrics& m) {
    if (m.step % 50 == 0 || trainer.done()) {
      std::fprintf(stderr, "step %zu loss %.5f lr %.3e grad_norm %.4f\n", m.step, m.loss, m.lr,
                   m.grad_norm);
    }
    if (tc.checkpoint_every > 0 && m.step % tc.checkpoint_every == 0 && !trainer.done()) {
      save(dir / "last.ckpt", m.step);
      trainer.save_state(dir / "last.state");
    }
  });
  const auto step = static_cast<std::size_t>(trainer.steps_done());
  save(dir / "final.ckpt", step);
  save(dir / "last.ckpt", step);
  trainer.save_state(dir / "last.state");
  std::cout << "final checkpoint " << (dir / "final.ckpt").string() << " at step " << step << '\n';
  return 0;
}

int cmd_train(const TrainArgs& a) {
  RunConfig rc = load_run_config(a.config);
  if (!a.out.empty()) rc.output_dir = a.out;
  if (a.steps > 0) rc.train.total_steps = a.steps;
  const Stage stage = parse_stage(a.stage);
  if (a.lr > 0.0) {
    rc.train.peak_lr = a.lr;
  } else if (stage == Stage::S2) {
    rc.train.peak_lr *= kStage2LrScale;
  }
  if (a.seed >= 0) rc.train.seed = static_cast<std::uint64_t>(a.seed);
  rc.validate();
  return rc.precision == Precision::F64 ? run_train<double>(rc, stage, a)
                                        : run_train<float>(rc, stage, a);
}

// ---------------------------------------------------------------------------
// generate / readout / encode

struct GenerateArgs {
  std::string ckpt;
  std::string image;
  DecodeConfig decode;
  bool recompute = false;
};

template <typename T>
int run_generate(const Checkpoint& ckpt, const GenerateArgs& a) {
  const auto model = model_from_checkpoint<T>(ckpt);
  const Patches p = prepare_image(read_png(a.image), stage_of(ckpt), imaging_of(ckpt),
                                  ckpt.config.patch_size);
  const ByteTokenizer tokenizer(ckpt.config.vocab);
  std::cout << generate(model, p, a.decode, tokenizer,
                        a.recompute ? DecodeMode::Recompute : DecodeMode::Incremental)
            << '\n';
  return 0;
}

int cmd_generate(const GenerateArgs& a) {
  a.decode.validate();
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  return wants_f64(ckpt) ? run_generate<double>(ckpt, a) : run_generate<float>(ckpt, a);
}

struct ReadoutArgs {
  std::string ckpt;
  std::string image;
  std::vector<std::size_t> patches;
  std::size_t k = 5;
  std::string csv;
};

std::string printable(const ByteTokenizer& tok, std::int32_t id) {
  if (id == tok.eos()) return "<eos>";
  const std::string s = tok.decode(std::span(&id, 1));
  if (s.size() == 1 && (s[0] == ' ' || s[0] == ',' || s[0] == '"')) {
    return s[0] == ' ' ? "<space>" : s[0] == ',' ? "<comma>" : "<quote>";
  }
  if (s.size() == 1 && static_cast<unsigned char>(s[0]) < 0x20) return "<0x" + std::to_string(id) + ">";
  return s;
}

int cmd_readout(const ReadoutArgs& a) {
  if (a.patches.empty()) throw UsageError("--patches needs at least one index");
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const auto model = model_from_checkpoint<float>(ckpt);
  const Patches p = prepare_image(read_png(a.image), stage_of(ckpt), imaging_of(ckpt),
                                  ckpt.config.patch_size);
  const ByteTokenizer tokenizer(ckpt.config.vocab);
  const auto rows = patch_readout(model, p, a.patches, a.k);

  std::ofstream csv;
  if (!a.csv.empty()) {
    csv.open(a.csv);
    if (!csv) throw DataError("cannot write " + a.csv);
    csv << "# genlip-readout v1\npatch,row,col,rank,token,text,prob\n";
    csv.precision(9);
  }
  std::printf("grid %zux%zu\n%6s %4s %4s %4s %6s %-8s %s\n", p.grid.rows, p.grid.cols, "patch",
              "row", "col", "rank", "token", "text", "prob");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t idx = a.patches[i];
    const std::size_t r = idx / p.grid.cols, c = idx % p.grid.cols;
    for (std::size_t rank = 0; rank < rows[i].size(); ++rank) {
      const auto& tp = rows[i][rank];
      const std::string text = printable(tokenizer, tp.token);
      std::printf("%6zu %4zu %4zu %4zu %6d %-8s %.6f\n", idx, r, c, rank + 1, tp.token,
                  text.c_str(), tp.prob);
      if (csv.is_open()) {
        csv << idx << ',' << r << ',' << c << ',' << rank + 1 << ',' << tp.token << ",\"" << text
            << "\"," << tp.prob << '\n';
      }
    }
  }
  return 0;
}

struct EncodeArgs {
  std::string ckpt;
  std::string image;
  std::string out;
};

int cmd_encode(const EncodeArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const auto model = model_from_checkpoint<float>(ckpt);
  const Patches p = prepare_image(read_png(a.image), Stage::S2, imaging_of(ckpt),
                                  ckpt.config.patch_size);
  const auto features = model.encode_image(p);
  write_tensor_dump(a.out, features.shape(), features.data());
  std::cout << "features " << shape_to_string(features.shape()) << " (grid " << p.grid.rows << 'x'
            << p.grid.cols << ") -> " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// diag-sink

struct SinkArgs {
  std::string config;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string out;
  std::size_t every = 25;
  std::size_t steps = 0;
};

template <typename T>
int run_sink(const RunConfig& rc, const SinkArgs& a) {
  const ByteTokenizer tokenizer(rc.model.vocab);
  const auto data = encode_samples(load_samples(rc.data), rc.train.stage, rc.train.imaging,
                                   rc.model.patch_size, tokenizer);
  const auto summary = gating_ablation<T>(data, rc.model, rc.train, a.seeds, a.every);
  const fs::path dir = rc.output_dir / "sink";
  fs::create_directories(dir);
  write_ablation_csv(dir / "ablation.csv", summary);
  write_ablation_svg(dir / "ablation.svg", summary);
  std::printf("final sink mass  gated %.4f  ungated %.4f\n", summary.gated_final_sink,
              summary.ungated_final_sink);
  std::printf("final loss       gated %.4f  ungated %.4f\n", summary.gated_final_loss,
              summary.ungated_final_loss);
  std::printf("gated < ungated: %s\n",
              summary.gated_final_sink < summary.ungated_final_sink ? "yes" : "no");
  std::cout << "wrote " << (dir / "ablation.csv").string() << " and "
            << (dir / "ablation.svg").string() << '\n';
  return 0;
}

int cmd_diag_sink(const SinkArgs& a) {
  if (a.seeds.size() < 2) throw UsageError("--seeds needs at least two seeds");
  RunConfig rc = load_run_config(a.config);
  if (!a.out.empty()) rc.output_dir = a.out;
  if (a.steps > 0) rc.train.total_steps = a.steps;
  rc.validate();
  return rc.precision == Precision::F64 ? run_sink<double>(rc, a) : run_sink<float>(rc, a);
}

// ---------------------------------------------------------------------------
// pack-inspect

struct PackArgs {
  std::string manifest;
  std::size_t max_len = 256;
  std::string stage = "s1";
  std::size_t image_side = 64;
  std::size_t patch_size = 16;
  bool no_mask = false;
};

int cmd_pack_inspect(const PackArgs& a) {
  const auto samples = load_manifest_samples(a.manifest);
  if (samples.empty()) {
    std::cout << "no samples\n";
    return 0;
  }
  ImagingConfig imaging;
  imaging.image_side = a.image_side;
  const ByteTokenizer tokenizer;
  const auto encoded = encode_samples(samples, parse_stage(a.stage), imaging, a.patch_size, tokenizer);
  std::vector<PackedSequence> seqs;
  for (const auto& e : encoded) seqs.push_back(e.sequence);
  const auto packs = pack(seqs, a.max_len, tokenizer.pad());
  std::printf("%zu samples -> %zu packs of length %zu\n", samples.size(), packs.size(), a.max_len);
  for (std::size_t i = 0; i < packs.size(); ++i) {
    const auto& p = packs[i];
    const std::size_t used = p.sample_boundaries.back();
    std::printf("pack %zu: %zu samples, %zu tokens, %zu pad, %zu supervised\n", i,
                p.sample_count(), used, p.size() - used, p.supervised_count());
    for (std::size_t s = 0; s < p.sample_count(); ++s) {
      std::printf("  [%zu,%zu) %s grid %zux%zu\n", p.sample_boundaries[s], p.sample_boundaries[s + 1],
                  p.sample_names[s].c_str(), p.grids[s].rows, p.grids[s].cols);
    }
  }
  if (!a.no_mask) {
    std::cout << "mask of pack 0 (" << a.max_len << 'x' << a.max_len << "):\n"
              << render_mask(prefix_lm_mask(packs.front()));
  }
  return 0;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<T>(v));
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + ": '" + item + "' is not a non-negative integer");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"genlip: generative vision-language pretraining at desk scale"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic shapes dataset (PNG + manifest)");
  s->add_option("--seed", synth.seed, "Generator seed");
  s->add_option("--count", synth.count, "Number of samples")->check(CLI::PositiveNumber);
  s->add_option("--min-side", synth.min_side, "Smallest canvas side");
  s->add_option("--max-side", synth.max_side, "Largest canvas side");
  s->add_option("--out", synth.out, "Output directory")->required();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Run one training stage");
  t->add_option("--config", train.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  t->add_option("--stage", train.stage, "s1 (fixed resolution) or s2 (native aspect ratio)")
      ->check(CLI::IsMember({"s1", "s2", "S1", "S2"}));
  auto* resume = t->add_flag("--resume", train.resume, "Continue from <output>/<stage>/last.ckpt");
  t->add_flag("--from-scratch", train.from_scratch, "Allow s2 without an s1 checkpoint");
  t->add_option("--init", train.init, "Initial weights")
      ->check(CLI::ExistingFile)
      ->excludes(resume);
  t->add_option("--out", train.out, "Override output_dir");
  t->add_option("--steps", train.steps, "Override total_steps");
  t->add_option("--lr", train.lr, "Override peak_lr");
  t->add_option("--seed", train.seed, "Override seed");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Caption an image");
  g->add_option("--ckpt", gen.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  g->add_option("--image", gen.image, "PNG image")->required()->check(CLI::ExistingFile);
  g->add_option("--max-new", gen.decode.max_new_tokens, "Maximum new tokens");
  g->add_option("--temperature", gen.decode.temperature, "Sampling temperature");
  g->add_option("--top-p", gen.decode.top_p, "Nucleus cutoff");
  g->add_option("--seed", gen.decode.seed, "Sampling seed");
  g->add_flag("--recompute", gen.recompute, "Re-run the full prefix at every step");

  ReadoutArgs readout;
  std::string readout_patches;
  auto* r = app.add_subcommand("readout", "Top-k LM-head tokens of selected patches");
  r->add_option("--ckpt", readout.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  r->add_option("--image", readout.image, "PNG image")->required()->check(CLI::ExistingFile);
  r->add_option("--patches", readout_patches, "Comma-separated patch indices (row-major)")
      ->required();
  r->add_option("--k", readout.k, "Tokens per patch")->check(CLI::PositiveNumber);
  r->add_option("--csv", readout.csv, "Also write a CSV table");

  SinkArgs sink;
  std::string sink_seeds = "1,2,3";
  auto* d = app.add_subcommand("diag-sink", "Gated vs ungated attention-sink ablation");
  d->add_option("--config", sink.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  d->add_option("--seeds", sink_seeds, "Comma-separated seeds");
  d->add_option("--out", sink.out, "Override output_dir");
  d->add_option("--every", sink.every, "Record interval in steps")->check(CLI::PositiveNumber);
  d->add_option("--steps", sink.steps, "Override total_steps");

  EncodeArgs enc;
  auto* e = app.add_subcommand("encode", "Export final-LN patch features of an image");
  e->add_option("--ckpt", enc.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  e->add_option("--image", enc.image, "PNG image")->required()->check(CLI::ExistingFile);
  e->add_option("--out", enc.out, "Feature dump path")->required();

  PackArgs pk;
  auto* pi = app.add_subcommand("pack-inspect", "Show pack composition and the first pack's mask");
  pi->add_option("--manifest", pk.manifest, "JSONL manifest")->required()->check(CLI::ExistingFile);
  pi->add_option("--max-len", pk.max_len, "Pack length")->check(CLI::PositiveNumber);
  pi->add_option("--stage", pk.stage, "Imaging mode")->check(CLI::IsMember({"s1", "s2", "S1", "S2"}));
  pi->add_option("--image-side", pk.image_side, "S1 square side");
  pi->add_option("--patch-size", pk.patch_size, "Patch side");
  pi->add_flag("--no-mask", pk.no_mask, "Skip the mask grid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*s) return cmd_synth(synth);
    if (*t) return cmd_train(train);
    if (*g) return cmd_generate(gen);
    if (*r) {
      readout.patches = parse_list<std::size_t>(readout_patches, "--patches");
      return cmd_readout(readout);
    }
    if (*d) {
      sink.seeds = parse_list<std::uint64_t>(sink_seeds, "--seeds");
      return cmd_diag_sink(sink);
    }
    if (*e) return cmd_encode(enc);
    if (*pi) return cmd_pack_inspect(pk);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return kUsageError;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kDomainError;
  }
  return kUsageError;
}
