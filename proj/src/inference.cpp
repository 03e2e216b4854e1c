// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "genlip/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "genlip/errors.hpp"

namespace genlip {

void DecodeConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("decode: temperature must be positive");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("decode: top_p must be in (0,1]");
  if (max_new_tokens == 0) throw ConfigError("decode: max_new_tokens must be at least 1");
}

std::int32_t sample_token(std::span<const double> logits, const DecodeConfig& cfg,
                          std::mt19937_64& rng) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp((logits[i] - mx) / cfg.temperature);
    z += p[i];
  }
  std::vector<std::int32_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::int32_t a, std::int32_t b) { return p[a] > p[b]; });
  // Smallest prefix whose mass reaches top_p.
  std::size_t keep = 0;
  double mass = 0.0;
  while (keep < order.size()) {
    mass += p[order[keep++]] / z;
    if (mass >= cfg.top_p) break;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < keep; ++i) total += p[order[i]];
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    acc += p[order[i]];
    if (u < acc) return order[i];
  }
  return order[keep - 1];
}

namespace {

template <typename T>
std::vector<double> last_row_as_double(const Tensor<T>& logits) {
  const std::size_t v = logits.dim(1);
  auto data = logits.data();
  std::vector<double> out(v);
  for (std::size_t i = 0; i < v; ++i) out[i] = static_cast<double>(data[data.size() - v + i]);
  return out;
}

// Runs `rows` through every block against the cache and returns final-LN
// logits of the last row.
template <typename T>
std::vector<double> cached_step(const Model<T>& model, KvCache<T>& cache, const Tensor<T>& rows,
                                std::span<const PositionTriple> positions) {
  const std::size_t n = rows.dim(0);
  const AttentionMask mask = AttentionMask::full(n, cache.length() + n);
  const std::vector<std::int32_t> ids(n, 0);
  Tensor<T> x = rows;
  for (std::size_t l = 0; l < model.config().layers; ++l) {
    x = model.block_forward(l, x, mask, positions, ids, false, nullptr, nullptr, &cache);
  }
  const auto& p = model.params();
  auto h = layer_norm(x, p.final_gamma, p.final_beta, static_cast<T>(model.config().norm_eps));
  return last_row_as_double(model.lm_logits(h));
}

}  // namespace

template <typename T>
std::vector<std::int32_t> generate_tokens(const Model<T>& model, const Patches& patches,
                                          const DecodeConfig& cfg, const ByteTokenizer& tokenizer,
                                          DecodeMode mode) {
  cfg.validate();
  NoGradGuard no_grad;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::int32_t> out;
  const PackedSequence prefix = build_prefix(patches, {});
  const std::size_t budget = model.config().max_tokens;
  const auto first_text = static_cast<std::int32_t>(std::max(patches.grid.rows, patches.grid.cols));

  KvCache<T> cache;
  std::vector<double> logits;
  if (mode == DecodeMode::Incremental) {
    logits = cached_step(model, cache, model.embed(prefix), prefix.positions);
  } else {
    logits = last_row_as_double(model.forward(prefix));
  }
  while (out.size() < cfg.max_new_tokens) {
    const std::int32_t tok = sample_token(logits, cfg, rng);
    if (tok == tokenizer.eos()) break;
    out.push_back(tok);
    if (out.size() == cfg.max_new_tokens || prefix.size() + out.size() >= budget) break;
    if (mode == DecodeMode::Incremental) {
      const std::int32_t coord = first_text + static_cast<std::int32_t>(out.size() - 1);
      const PositionTriple pos{coord, coord, coord};
      const std::int32_t id[1] = {tok};
      logits = cached_step(model, cache, embedding(model.params().tok_embed, std::span(id)),
                           std::span(&pos, 1));
    } else {
      logits = last_row_as_double(model.forward(build_prefix(patches, out)));
    }
  }
  return out;
}

template <typename T>
std::string generate(const Model<T>& model, const Patches& patches, const DecodeConfig& cfg,
                     const ByteTokenizer& tokenizer, DecodeMode mode) {
  return tokenizer.decode(generate_tokens(model, patches, cfg, tokenizer, mode));
}

template <typename T>
std::vector<std::vector<TokenProb>> patch_readout(const Model<T>& model, const Patches& patches,
                                                  std::span<const std::size_t> patch_indices,
                                                  std::size_t k) {
  if (k == 0) throw ConfigError("patch_readout: k must be at least 1");
  for (std::size_t idx : patch_indices) {
    if (idx >= patches.count()) {
      throw std::out_of_range("patch_readout: patch " + std::to_string(idx) + " outside the " +
                              std::to_string(patches.grid.rows) + "x" +
                              std::to_string(patches.grid.cols) + " grid");
    }
  }
  NoGradGuard no_grad;
  const auto features = model.encode_image(patches);
  const std::vector<std::size_t> rows(patch_indices.begin(), patch_indices.end());
  const auto logits = model.lm_logits(gather_rows(features, rows));
  const std::size_t v = logits.dim(1);
  k = std::min(k, v);
  std::vector<std::vector<TokenProb>> out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto row = logits.data().subspan(r * v, v);
    const double mx = static_cast<double>(*std::max_element(row.begin(), row.end()));
    std::vector<TokenProb> probs(v);
    double z = 0.0;
    for (std::size_t i = 0; i < v; ++i) {
      probs[i] = {static_cast<std::int32_t>(i), std::exp(static_cast<double>(row[i]) - mx)};
      z += probs[i].prob;
    }
    for (auto& p : probs) p.prob /= z;
    std::partial_sort(probs.begin(), probs.begin() + static_cast<std::ptrdiff_t>(k), probs.end(),
                      [](const TokenProb& a, const TokenProb& b) {
                        return a.prob != b.prob ? a.prob > b.prob : a.token < b.token;
                      });
    probs.resize(k);
    out.push_back(std::move(probs));
  }
  return out;
}

double first_token_mass(const AttentionProbs& probs, std::size_t head,
                        std::span<const std::size_t> rows) {
  if (rows.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t q : rows) total += probs.at(head, q, 0);
  return total / static_cast<double>(rows.size());
}

template <typename T>
SinkReport sink_mass(const Model<T>& model, const PackedSequence& seq) {
  NoGradGuard no_grad;
  std::vector<AttentionProbs> attention;
  ForwardOptions options;
  options.attention = &attention;
  model.hidden_states(seq, options);

  std::vector<std::size_t> rows;
  const std::size_t end = seq.sample_count() > 0 ? seq.sample_boundaries[1] : 0;
  for (std::size_t q = 0; q < end; ++q) {
    if (seq.kinds[q] != TokenKind::Pad) rows.push_back(q);
  }
  SinkReport report;
  report.layers = attention.size();
  report.heads = model.config().heads;
  for (const auto& layer : attention) {
    for (std::size_t h = 0; h < report.heads; ++h) {
      report.mass.push_back(first_token_mass(layer, h, rows));
    }
  }
  report.mean = report.mass.empty()
                    ? 0.0
                    : std::accumulate(report.mass.begin(), report.mass.end(), 0.0) /
                          static_cast<double>(report.mass.size());
  return report;
}

void write_sink_csv(const std::filesystem::path& path, const SinkReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("sink report: cannot write " + path.string());
  out << "# genlip-sink v1";
  if (!report.tag.empty()) out << ' ' << report.tag;
  out << "\nlayer,head,mass\n";
  out.precision(9);
  for (std::size_t l = 0; l < report.layers; ++l) {
    for (std::size_t h = 0; h < report.heads; ++h) {
      out << l << ',' << h << ',' << report.at(l, h) << '\n';
    }
  }
}

template <typename T>
AblationSummary gating_ablation(const std::vector<EncodedSample>& dataset,
                                const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                std::span<const std::uint64_t> seeds, std::size_t record_every) {
  if (seeds.size() < 2) throw ConfigError("gating_ablation: at least two seeds are required");
  if (record_every == 0) record_every = 1;
  AblationSummary summary;
  for (const bool gated : {true, false}) {
    double sink_total = 0.0, loss_total = 0.0;
    for (const std::uint64_t seed : seeds) {
      ModelConfig mc = model_cfg;
      mc.gated = gated;
      TrainConfig tc = train_cfg;
      tc.seed = seed;
      tc.sink_every = 0;
      tc.checkpoint_every = 0;
      Model<T> model(mc, seed);
      Trainer<T> trainer(model, dataset, tc);
      AblationRow last;
      while (!trainer.done()) {
        const StepMetrics m = trainer.step();
        if (m.step % record_every == 0 || trainer.done()) {
          last = {gated ? "gated" : "ungated", seed, m.step, m.loss, trainer.probe_sink_mass()};
          summary.rows.push_back(last);
        }
      }
      sink_total += last.sink_mass;
      loss_total += last.loss;
    }
    const double n = static_cast<double>(seeds.size());
    (gated ? summary.gated_final_sink : summary.ungated_final_sink) = sink_total / n;
    (gated ? summary.gated_final_loss : summary.ungated_final_loss) = loss_total / n;
  }
  return summary;
}

void write_ablation_csv(const std::filesystem::path& path, const AblationSummary& summary) {
  std::ofstream out(path);
  if (!out) throw DataError("ablation: cannot write " + path.string());
  out << "# genlip-ablation v1\nvariant,seed,step,loss,sink_mass\n";
  out.precision(9);
  for (const auto& r : summary.rows) {
    out << r.variant << ',' << r.seed << ',' << r.step << ',' << r.loss << ',' << r.sink_mass
        << '\n';
  }
}

void write_ablation_svg(const std::filesystem::path& path, const AblationSummary& summary) {
  std::ofstream out(path);
  if (!out) throw DataError("ablation: cannot write " + path.string());
  constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 20, kTop = 30, kBottom = 50;
  std::size_t max_step = 1;
  for (const auto& r : summary.rows) max_step = std::max(max_step, r.step);
  auto px = [&](double step) { return kLeft + (kWidth - kLeft - kRight) * step / max_step; };
  auto py = [&](double mass) { return kTop + (kHeight - kTop - kBottom) * (1.0 - mass); };

  char buf[160];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
         "viewBox=\"0 0 640 400\">\n"
      << "<!-- genlip-ablation-plot v1 -->\n"
      << "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", kLeft,
                py(0), kWidth - kRight, py(0));
  out << buf;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", kLeft,
                py(0), kLeft, py(1));
  out << buf;
  for (int t = 0; t <= 4; ++t) {
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"end\">%.2f</text>\n",
                  kLeft - 6, py(t / 4.0) + 4, t / 4.0);
    out << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" text-anchor=\"middle\">step (max "
                "%zu)</text>\n",
                (kLeft + kWidth - kRight) / 2, kHeight - 15, max_step);
  out << buf;
  out << "<text x=\"14\" y=\"200\" font-size=\"12\" transform=\"rotate(-90 14 200)\" "
         "text-anchor=\"middle\">first-token attention mass</text>\n";

  // Rows arrive grouped by (variant, seed).
  std::size_t i = 0;
  while (i < summary.rows.size()) {
    std::size_t j = i;
    const auto& head = summary.rows[i];
    out << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\""
        << (head.variant == "gated" ? "#1f77b4" : "#d62728") << "\" points=\"";
    while (j < summary.rows.size() && summary.rows[j].variant == head.variant &&
           summary.rows[j].seed == head.seed) {
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", j == i ? "" : " ",
                    px(static_cast<double>(summary.rows[j].step)), py(summary.rows[j].sink_mass));
      out << buf;
      ++j;
    }
    out << "\"><title>" << head.variant << " seed " << head.seed << "</title></polyline>\n";
    i = j;
  }
  out << "<text x=\"480\" y=\"22\" font-size=\"12\" fill=\"#1f77b4\">gated</text>\n"
      << "<text x=\"540\" y=\"22\" font-size=\"12\" fill=\"#d62728\">ungated</text>\n"
      << "</svg>\n";
}

#define GENLIP_INSTANTIATE(T)                                                                  \
  template std::vector<std::int32_t> generate_tokens(const Model<T>&, const Patches&,         \
                                                     const DecodeConfig&, const ByteTokenizer&, \
                                                     DecodeMode);                              \
  template std::string generate(const Model<T>&, const Patches&, const DecodeConfig&,          \
                                const ByteTokenizer&, DecodeMode);                             \
  template std::vector<std::vector<TokenProb>> patch_readout(                                  \
      const Model<T>&, const Patches&, std::span<const std::size_t>, std::size_t);             \
  template SinkReport sink_mass(const Model<T>&, const PackedSequence&);                      \
  template AblationSummary gating_ablation<T>(const std::vector<EncodedSample>&,               \
                                              const ModelConfig&, const TrainConfig&,          \
                                              std::span<const std::uint64_t>, std::size_t);

GENLIP_INSTANTIATE(float)
GENLIP_INSTANTIATE(double)

#undef GENLIP_INSTANTIATE

}  // namespace genlip
