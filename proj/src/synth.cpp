// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "genlip/errors.hpp"
#include "genlip/image.hpp"

namespace genlip {

namespace {

constexpr std::array<std::string_view, 6> kColorNames{"red", "green", "blue",
                                                      "yellow", "purple", "orange"};
constexpr std::array<Rgb8, 6> kColors{{{220, 40, 40},
                                       {40, 170, 60},
                                       {40, 70, 220},
                                       {235, 205, 40},
                                       {140, 60, 190},
                                       {240, 130, 30}}};
constexpr std::array<std::string_view, 3> kShapeNames{"circle", "square", "triangle"};
// 3x3 cells, row-major.
constexpr std::array<std::string_view, 9> kPlaceNames{
    "top left", "top",    "top right",   "left",        "center",
    "right",    "bottom left", "bottom", "bottom right"};
constexpr Rgb8 kBackground{235, 235, 235};

float channel(std::uint8_t v) { return static_cast<float>(v) / 255.0F; }

bool inside(const ShapeSpec& s, double x, double y) {
  const double dx = x - s.cx, dy = y - s.cy;
  switch (s.kind) {
    case ShapeKind::Circle: return dx * dx + dy * dy <= s.radius * s.radius;
    case ShapeKind::Square: return std::abs(dx) <= s.radius && std::abs(dy) <= s.radius;
    case ShapeKind::Triangle: {
      // Apex up at (cx, cy - r), base from (cx - r, cy + r) to (cx + r, cy + r).
      if (dy < -s.radius || dy > s.radius) return false;
      const double half_width = 0.5 * (dy + s.radius);
      return std::abs(dx) <= half_width;
    }
  }
  return false;
}

}  // namespace

std::span<const std::string_view> synth_color_names() { return kColorNames; }
std::span<const std::string_view> synth_shape_names() { return kShapeNames; }
std::span<const std::string_view> synth_place_names() { return kPlaceNames; }

double shape_area(const ShapeSpec& s) {
  switch (s.kind) {
    case ShapeKind::Circle: return std::numbers::pi * s.radius * s.radius;
    case ShapeKind::Square: return 4.0 * s.radius * s.radius;
    case ShapeKind::Triangle: return 2.0 * s.radius * s.radius;
  }
  return 0.0;
}

std::size_t rasterize(Image& img, const ShapeSpec& s) {
  const auto y0 = static_cast<long long>(std::floor(s.cy - s.radius - 1));
  const auto y1 = static_cast<long long>(std::ceil(s.cy + s.radius + 1));
  const auto x0 = static_cast<long long>(std::floor(s.cx - s.radius - 1));
  const auto x1 = static_cast<long long>(std::ceil(s.cx + s.radius + 1));
  std::size_t painted = 0;
  for (long long y = std::max(0LL, y0); y < std::min<long long>(y1, img.height); ++y) {
    for (long long x = std::max(0LL, x0); x < std::min<long long>(x1, img.width); ++x) {
      if (!inside(s, x + 0.5, y + 0.5)) continue;
      img.at(y, x, 0) = channel(s.color.r);
      img.at(y, x, 1) = channel(s.color.g);
      img.at(y, x, 2) = channel(s.color.b);
      ++painted;
    }
  }
  return painted;
}

std::vector<ImageSample> synth_generate(std::uint64_t seed, std::size_t count,
                                        const SynthOptions& options) {
  if (count == 0) throw ConfigError("synth_generate: count must be at least 1");
  if (options.min_side < 12 || options.max_side < options.min_side) {
    throw ConfigError("synth_generate: canvas range must satisfy 12 <= min_side <= max_side");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> side(options.min_side, options.max_side);
  std::uniform_int_distribution<int> shape_count(1, 3);
  std::uniform_int_distribution<std::size_t> color(0, kColors.size() - 1);
  std::uniform_int_distribution<std::size_t> shape(0, kShapeNames.size() - 1);

  std::vector<ImageSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    ImageSample sample;
    const std::size_t h = side(rng);
    const std::size_t w = side(rng);
    sample.image = Image(h, w);
    for (std::size_t p = 0; p < h * w; ++p) {
      sample.image.pixels[p * 3 + 0] = channel(kBackground.r);
      sample.image.pixels[p * 3 + 1] = channel(kBackground.g);
      sample.image.pixels[p * 3 + 2] = channel(kBackground.b);
    }

    std::array<std::size_t, 9> cells{0, 1, 2, 3, 4, 5, 6, 7, 8};
    std::shuffle(cells.begin(), cells.end(), rng);
    const int n = shape_count(rng);
    std::sort(cells.begin(), cells.begin() + n);

    const double cell_h = static_cast<double>(h) / 3.0;
    const double cell_w = static_cast<double>(w) / 3.0;
    std::string caption;
    for (int k = 0; k < n; ++k) {
      const std::size_t cell = cells[k];
      const std::size_t ci = color(rng);
      const std::size_t si = shape(rng);
      ShapeSpec spec{static_cast<ShapeKind>(si), (cell % 3 + 0.5) * cell_w,
                     (cell / 3 + 0.5) * cell_h, 0.4 * std::min(cell_h, cell_w), kColors[ci]};
      rasterize(sample.image, spec);
      if (k > 0) caption += (k + 1 == n) ? " and " : ", ";
      caption += kColorNames[ci].front() == 'o' ? "an " : "a ";
      caption += kColorNames[ci];
      caption += ' ';
      caption += kShapeNames[si];
      caption += " at the ";
      caption += kPlaceNames[cell];
    }
    caption += '.';
    sample.caption = std::move(caption);
    char id[32];
    std::snprintf(id, sizeof id, "synth-%06zu", i);
    sample.id = id;
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace genlip
