// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Images, resolution selection and patchification.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace genlip {

/// Interleaved RGB, row-major, values in [0,1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, float fill = 0.0F)
      : height(h), width(w), pixels(h * w * 3, fill) {}

  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
  bool operator==(const Image&) const = default;
};

struct ImageSample {
  Image image;
  std::string caption;
  std::string id;
};

struct PatchGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t patch_size = 0;

  std::size_t count() const { return rows * cols; }
  bool operator==(const PatchGrid&) const = default;
};

/// Flattened patches, one row of 3·p·p values per patch. Patches are in
/// row-major grid order; inside a patch the layout is channel, then row,
/// then column (the layout of a conv kernel [C,p,p]).
struct Patches {
  PatchGrid grid;
  std::vector<float> values;

  std::size_t count() const { return grid.count(); }
  std::size_t width() const { return 3 * grid.patch_size * grid.patch_size; }
};

struct PixelNorm {
  std::array<float, 3> mean{0.48145466F, 0.4578275F, 0.40821073F};
  std::array<float, 3> std{0.26862954F, 0.26130258F, 0.27577711F};

  bool operator==(const PixelNorm&) const = default;
};

/// Bilinear resampling with half-pixel centers and edge clamping:
/// src = (dst + 0.5) * in/out - 0.5. Equal sizes reproduce the input exactly.
Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w);
Image center_crop(const Image& img, std::size_t out_h, std::size_t out_w);

/// Shorter side scaled to `side`, then center crop to side x side.
Image resize_fixed(const Image& img, std::size_t side, std::size_t patch_size);

/// Patch-grid size (rows, cols) chosen for an H x W image under a token budget.
PatchGrid native_grid(std::size_t height, std::size_t width, std::size_t min_tokens,
                      std::size_t max_tokens, std::size_t patch_size);
/// Aspect-preserving resize to native_grid().
Image resize_native(const Image& img, std::size_t min_tokens, std::size_t max_tokens,
                    std::size_t patch_size);

Patches patchify(const Image& img, std::size_t patch_size);
Image unpatchify(const Patches& patches);
/// Per-channel (v - mean) / std over patch values.
void normalize(Patches& patches, const PixelNorm& norm);

// ---------------------------------------------------------------------------
// Synthetic captioned shapes.

enum class ShapeKind : std::uint8_t { Circle, Square, Triangle };

struct Rgb8 {
  std::uint8_t r, g, b;
};

struct ShapeSpec {
  ShapeKind kind;
  double cx, cy;   // center in pixels
  double radius;   // half extent
  Rgb8 color;
};

/// Paints the pixels whose centers fall inside the shape; returns how many.
std::size_t rasterize(Image& img, const ShapeSpec& shape);
/// Exact area of the continuous shape.
double shape_area(const ShapeSpec& shape);

std::span<const std::string_view> synth_color_names();
std::span<const std::string_view> synth_shape_names();
std::span<const std::string_view> synth_place_names();

struct SynthOptions {
  std::size_t min_side = 48;
  std::size_t max_side = 160;
};

/// Deterministic corpus of 1-3 shapes per canvas with templated captions
/// ("a red circle at the top left and a blue square at the center.").
std::vector<ImageSample> synth_generate(std::uint64_t seed, std::size_t count,
                                        const SynthOptions& options = {});

// ---------------------------------------------------------------------------
// Files.

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

struct ManifestRecord {
  std::string id;
  std::string image;  // relative to the manifest directory unless absolute
  std::string caption;
};

/// One JSON object per line with keys id, image, caption.
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);
std::vector<ImageSample> load_manifest_samples(const std::filesystem::path& path);

}  // namespace genlip
