// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "genlip/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "genlip/errors.hpp"

namespace genlip {

namespace {

void require_nonempty(const Image& img, const char* op) {
  if (img.height == 0 || img.width == 0) {
    throw DataError(std::string(op) + ": degenerate image " + std::to_string(img.height) + "x" +
                    std::to_string(img.width));
  }
}

struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    taps[o] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w) {
  require_nonempty(img, "resize");
  if (out_h == 0 || out_w == 0) throw DataError("resize: zero output size");
  if (out_h == img.height && out_w == img.width) return img;
  const auto ty = bilinear_taps(img.height, out_h);
  const auto tx = bilinear_taps(img.width, out_w);
  Image out(out_h, out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const auto& a = ty[y];
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto& b = tx[x];
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = img.at(a.lo, b.lo, c) * (1.0 - b.frac) + img.at(a.lo, b.hi, c) * b.frac;
        const double bot = img.at(a.hi, b.lo, c) * (1.0 - b.frac) + img.at(a.hi, b.hi, c) * b.frac;
        out.at(y, x, c) = static_cast<float>(top * (1.0 - a.frac) + bot * a.frac);
      }
    }
  }
  return out;
}

Image center_crop(const Image& img, std::size_t out_h, std::size_t out_w) {
  if (out_h > img.height || out_w > img.width) {
    throw DataError("center_crop: " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                    " exceeds " + std::to_string(img.height) + "x" + std::to_string(img.width));
  }
  const std::size_t y0 = (img.height - out_h) / 2;
  const std::size_t x0 = (img.width - out_w) / 2;
  Image out(out_h, out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    std::copy_n(&img.pixels[((y0 + y) * img.width + x0) * 3], out_w * 3, &out.pixels[y * out_w * 3]);
  }
  return out;
}

Image resize_fixed(const Image& img, std::size_t side, std::size_t patch_size) {
  if (patch_size == 0 || side == 0 || side % patch_size != 0) {
    throw ConfigError("resize_fixed: side " + std::to_string(side) +
                      " is not a positive multiple of patch size " + std::to_string(patch_size));
  }
  require_nonempty(img, "resize_fixed");
  std::size_t h = side, w = side;
  if (img.height <= img.width) {
    w = static_cast<std::size_t>(std::llround(static_cast<double>(img.width) * side / img.height));
  } else {
    h = static_cast<std::size_t>(std::llround(static_cast<double>(img.height) * side / img.width));
  }
  return center_crop(resize_bilinear(img, std::max(h, side), std::max(w, side)), side, side);
}

PatchGrid native_grid(std::size_t height, std::size_t width, std::size_t min_tokens,
                      std::size_t max_tokens, std::size_t patch_size) {
  if (height == 0 || width == 0) {
    throw DataError("resize_native: degenerate image " + std::to_string(height) + "x" +
                    std::to_string(width));
  }
  if (patch_size == 0 || min_tokens == 0 || max_tokens < min_tokens) {
    throw ConfigError("resize_native: need patch_size > 0 and 1 <= min_tokens <= max_tokens");
  }
  enum class Mode { Down, Up, Keep };
  const double h = static_cast<double>(height) / patch_size;
  const double w = static_cast<double>(width) / patch_size;
  const double tokens = h * w;
  const double lo = static_cast<double>(min_tokens);
  const double hi = static_cast<double>(max_tokens);
  const Mode mode = tokens > hi ? Mode::Down : (tokens < lo ? Mode::Up : Mode::Keep);
  const double s = std::sqrt(std::clamp(tokens, lo, hi) / tokens);
  const double log_aspect = std::log(h / w);

  auto snap = [mode](double v) -> long long {
    constexpr double kSlack = 1e-9;
    long long r = 0;
    switch (mode) {
      case Mode::Down: r = static_cast<long long>(std::floor(v + kSlack)); break;
      case Mode::Up: r = static_cast<long long>(std::ceil(v - kSlack)); break;
      case Mode::Keep: r = std::llround(v); break;
    }
    return std::max<long long>(r, 1);
  };
  auto feasible = [&](long long r, long long c) {
    const long long n = r * c;
    return r >= 1 && c >= 1 && n >= static_cast<long long>(min_tokens) &&
           n <= static_cast<long long>(max_tokens);
  };
  auto aspect_error = [&](long long r, long long c) {
    return std::abs(std::log(static_cast<double>(r) / static_cast<double>(c)) - log_aspect);
  };

  const long long r0 = snap(h * s);
  const long long c0 = snap(w * s);
  if (feasible(r0, c0)) {
    return {static_cast<std::size_t>(r0), static_cast<std::size_t>(c0), patch_size};
  }

  long long best_r = 0, best_c = 0;
  auto better = [&](long long r, long long c) {
    if (best_r == 0) return true;
    const double ea = aspect_error(r, c), eb = aspect_error(best_r, best_c);
    if (ea != eb) return ea < eb;
    return r < best_r;
  };
  for (long long r = r0 - 1; r <= r0 + 1; ++r) {
    for (long long c = c0 - 1; c <= c0 + 1; ++c) {
      if (feasible(r, c) && better(r, c)) {
        best_r = r;
        best_c = c;
      }
    }
  }
  if (best_r == 0) {
    // Extreme aspect ratios: pick the closest aspect among all feasible grids.
    double best_err = std::numeric_limits<double>::infinity();
    for (long long r = 1; r <= static_cast<long long>(max_tokens); ++r) {
      const long long cmin = (static_cast<long long>(min_tokens) + r - 1) / r;
      const long long cmax = static_cast<long long>(max_tokens) / r;
      if (cmin > cmax) continue;
      const long long ideal = std::llround(static_cast<double>(r) * w / h);
      const long long c = std::clamp(ideal, std::max<long long>(cmin, 1), cmax);
      const double err = aspect_error(r, c);
      if (err < best_err) {
        best_err = err;
        best_r = r;
        best_c = c;
      }
    }
  }
  return {static_cast<std::size_t>(best_r), static_cast<std::size_t>(best_c), patch_size};
}

Image resize_native(const Image& img, std::size_t min_tokens, std::size_t max_tokens,
                    std::size_t patch_size) {
  const PatchGrid g = native_grid(img.height, img.width, min_tokens, max_tokens, patch_size);
  return resize_bilinear(img, g.rows * patch_size, g.cols * patch_size);
}

Patches patchify(const Image& img, std::size_t p) {
  if (p == 0 || img.height == 0 || img.width == 0 || img.height % p != 0 || img.width % p != 0) {
    throw DataError("patchify: " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                    " is not divisible into " + std::to_string(p) + "-pixel patches");
  }
  Patches out;
  out.grid = {img.height / p, img.width / p, p};
  const std::size_t width = out.width();
  out.values.resize(out.count() * width);
  for (std::size_t gr = 0; gr < out.grid.rows; ++gr) {
    for (std::size_t gc = 0; gc < out.grid.cols; ++gc) {
      float* dst = out.values.data() + (gr * out.grid.cols + gc) * width;
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < p; ++y) {
          for (std::size_t x = 0; x < p; ++x) {
            dst[(c * p + y) * p + x] = img.at(gr * p + y, gc * p + x, c);
          }
        }
      }
    }
  }
  return out;
}

Image unpatchify(const Patches& patches) {
  const std::size_t p = patches.grid.patch_size;
  const std::size_t width = patches.width();
  if (patches.values.size() != patches.count() * width) {
    throw DataError("unpatchify: value count does not match the grid");
  }
  Image img(patches.grid.rows * p, patches.grid.cols * p);
  for (std::size_t gr = 0; gr < patches.grid.rows; ++gr) {
    for (std::size_t gc = 0; gc < patches.grid.cols; ++gc) {
      const float* src = patches.values.data() + (gr * patches.grid.cols + gc) * width;
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < p; ++y) {
          for (std::size_t x = 0; x < p; ++x) {
            img.at(gr * p + y, gc * p + x, c) = src[(c * p + y) * p + x];
          }
        }
      }
    }
  }
  return img;
}

void normalize(Patches& patches, const PixelNorm& norm) {
  const std::size_t pp = patches.grid.patch_size * patches.grid.patch_size;
  const std::size_t width = patches.width();
  for (std::size_t i = 0; i < patches.values.size(); ++i) {
    const std::size_t c = (i % width) / pp;
    patches.values[i] = (patches.values[i] - norm.mean[c]) / norm.std[c];
  }
}

}  // namespace genlip
