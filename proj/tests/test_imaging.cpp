// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <regex>
#include <set>

#include "genlip/errors.hpp"
#include "genlip/image.hpp"

using namespace genlip;
namespace fs = std::filesystem;

namespace {

Image random_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> v(0, 255);
  Image img(h, w);
  for (auto& p : img.pixels) p = static_cast<float>(v(rng)) / 255.0F;
  return img;
}

// Independent bilinear resampler: half-pixel centers, edge clamping.
double ref_sample(const Image& img, double sy, double sx, std::size_t c) {
  auto clampd = [](double v, double hi) { return std::min(std::max(v, 0.0), hi); };
  sy = clampd(sy, static_cast<double>(img.height - 1));
  sx = clampd(sx, static_cast<double>(img.width - 1));
  const auto y0 = static_cast<std::size_t>(sy), x0 = static_cast<std::size_t>(sx);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
  const double fy = sy - y0, fx = sx - x0;
  return (1 - fy) * ((1 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c)) +
         fy * ((1 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c));
}

Image ref_resize(const Image& img, std::size_t h, std::size_t w) {
  Image out(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double sy = (y + 0.5) * img.height / static_cast<double>(h) - 0.5;
      const double sx = (x + 0.5) * img.width / static_cast<double>(w) - 0.5;
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = static_cast<float>(ref_sample(img, sy, sx, c));
    }
  }
  return out;
}

// Largest (down) / smallest (up) square grid by exhaustive search.
std::size_t best_square_side(std::size_t side, std::size_t lo, std::size_t hi, std::size_t p) {
  const double tokens = static_cast<double>(side) * side / static_cast<double>(p * p);
  std::size_t best = 0;
  for (std::size_t k = 1; k * k <= hi * 4; ++k) {
    const std::size_t n = k * k;
    if (n < lo || n > hi) continue;
    if (tokens > hi && k > best) best = k;
    if (tokens < lo && (best == 0 || k < best)) best = k;
  }
  return best * p;
}

}  // namespace

TEST_CASE("resize_fixed examples") {
  std::mt19937_64 rng(21);
  const Image sq = random_image(224, 224, rng);
  const Image r = resize_fixed(sq, 224, 16);
  CHECK(r == sq);
  const Patches p = patchify(r, 16);
  CHECK(p.grid.rows == 14);
  CHECK(p.grid.cols == 14);
  CHECK(p.count() == 196);

  // 224 rows by 448 columns: no scaling, middle 224 columns survive.
  const Image wide = random_image(224, 448, rng);
  const Image crop = resize_fixed(wide, 224, 16);
  REQUIRE(crop.height == 224);
  REQUIRE(crop.width == 224);
  bool same = true;
  for (std::size_t y = 0; y < 224; ++y) {
    for (std::size_t x = 0; x < 224; ++x) {
      for (std::size_t c = 0; c < 3; ++c) same = same && crop.at(y, x, c) == wide.at(y, x + 112, c);
    }
  }
  CHECK(same);

  CHECK_THROWS_AS(resize_fixed(sq, 100, 16), ConfigError);
}

TEST_CASE("resize_fixed then patchify yields (side/p)^2 patches") {
  std::mt19937_64 rng(22);
  std::uniform_int_distribution<std::size_t> dim(5, 300);
  for (int i = 0; i < 40; ++i) {
    const Image img = random_image(dim(rng), dim(rng), rng);
    for (std::size_t side : {32, 64, 96}) {
      CHECK(patchify(resize_fixed(img, side, 16), 16).count() == (side / 16) * (side / 16));
    }
  }
}

TEST_CASE("bilinear resize matches an independent reference") {
  std::mt19937_64 rng(23);
  for (auto [h, w, oh, ow] : {std::array<std::size_t, 4>{7, 9, 16, 32}, {50, 31, 16, 16},
                             {3, 100, 48, 20}, {64, 64, 33, 65}}) {
    const Image img = random_image(h, w, rng);
    const Image a = resize_bilinear(img, oh, ow);
    const Image b = ref_resize(img, oh, ow);
    double worst = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
      worst = std::max(worst, static_cast<double>(std::abs(a.pixels[i] - b.pixels[i])));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("native grid examples") {
  CHECK(native_grid(224, 224, 16, 1024, 16) == PatchGrid{14, 14, 16});
  CHECK(native_grid(4096, 4096, 16, 1024, 16) == PatchGrid{32, 32, 16});
  CHECK(native_grid(20, 20, 16, 1024, 16) == PatchGrid{4, 4, 16});
  std::mt19937_64 rng(24);
  const Image small = random_image(20, 20, rng);
  const Image up = resize_native(small, 16, 1024, 16);
  CHECK(up.height == 64);
  CHECK(up.width == 64);
  const Image same = random_image(224, 224, rng);
  CHECK(resize_native(same, 16, 1024, 16) == same);
  CHECK_THROWS_AS(native_grid(0, 10, 16, 1024, 16), DataError);
}

TEST_CASE("native grid agrees with exhaustive search on squares") {
  for (std::size_t side = 1; side <= 2000; side += 7) {
    const std::size_t tokens = (side / 16) * (side / 16);
    const PatchGrid g = native_grid(side, side, 16, 1024, 16);
    CHECK(g.rows == g.cols);
    if (side % 16 == 0 && tokens >= 16 && tokens <= 1024) {
      CHECK(g.rows * 16 == side);
    } else if (static_cast<double>(side) * side / 256.0 > 1024) {
      CHECK(g.rows * 16 == best_square_side(side, 16, 1024, 16));
    } else if (static_cast<double>(side) * side / 256.0 < 16) {
      CHECK(g.rows * 16 == best_square_side(side, 16, 1024, 16));
    }
  }
}

TEST_CASE("native grid stays within the budget and near the aspect ratio") {
  std::mt19937_64 rng(25);
  std::uniform_real_distribution<double> log_side(0.0, std::log(4096.0));
  std::uniform_real_distribution<double> log_aspect(-std::log(3.0), std::log(3.0));
  for (int i = 0; i < 3000; ++i) {
    const double h = std::exp(log_side(rng));
    const auto height = std::max<std::size_t>(1, static_cast<std::size_t>(h));
    const auto width =
        std::max<std::size_t>(1, static_cast<std::size_t>(h * std::exp(log_aspect(rng))));
    const PatchGrid g = native_grid(height, width, 16, 1024, 16);
    CHECK(g.count() >= 16);
    CHECK(g.count() <= 1024);
    const double err = std::abs(std::log(static_cast<double>(g.rows) / g.cols) -
                                std::log(static_cast<double>(height) / width));
    INFO(height, "x", width, " -> ", g.rows, "x", g.cols);
    CHECK(err <= std::log(1.0 + 2.0 / std::min(g.rows, g.cols)) + 1e-12);
  }
}

TEST_CASE("patchify examples and inverse") {
  std::mt19937_64 rng(26);
  const Image one = random_image(16, 16, rng);
  const Patches p1 = patchify(one, 16);
  REQUIRE(p1.count() == 1);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < 16; ++y) {
      for (std::size_t x = 0; x < 16; ++x) {
        CHECK(p1.values[(c * 16 + y) * 16 + x] == one.at(y, x, c));
      }
    }
  }
  const Image tall = random_image(32, 16, rng);
  const Patches p2 = patchify(tall, 16);
  REQUIRE(p2.count() == 2);
  CHECK(p2.values[0] == tall.at(0, 0, 0));
  CHECK(p2.values[p2.width()] == tall.at(16, 0, 0));

  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{48, 80}, {16, 160}, {96, 32}}) {
    const Image img = random_image(h, w, rng);
    CHECK(unpatchify(patchify(img, 16)) == img);
  }
  CHECK_THROWS_AS(patchify(random_image(20, 16, rng), 16), DataError);
}

TEST_CASE("normalize applies per-channel mean and std") {
  Patches p;
  p.grid = {1, 1, 1};
  p.values = {0.5F, 0.25F, 1.0F};
  PixelNorm n;
  normalize(p, n);
  CHECK(p.values[0] == doctest::Approx((0.5 - n.mean[0]) / n.std[0]).epsilon(1e-6));
  CHECK(p.values[1] == doctest::Approx((0.25 - n.mean[1]) / n.std[1]).epsilon(1e-6));
  CHECK(p.values[2] == doctest::Approx((1.0 - n.mean[2]) / n.std[2]).epsilon(1e-6));
}

TEST_CASE("synth_generate is deterministic with a closed caption vocabulary") {
  const auto a = synth_generate(5, 40);
  const auto b = synth_generate(5, 40);
  REQUIRE(a.size() == 40);
  std::string colors, shapes, places;
  for (auto s : synth_color_names()) colors += (colors.empty() ? "" : "|") + std::string(s);
  for (auto s : synth_shape_names()) shapes += (shapes.empty() ? "" : "|") + std::string(s);
  for (auto s : synth_place_names()) places += (places.empty() ? "" : "|") + std::string(s);
  const std::string item = "an? (" + colors + ") (" + shapes + ") at the (" + places + ")";
  const std::regex grammar("^" + item + "((, " + item + ")? and " + item + ")?\\.$");
  std::set<std::size_t> sides;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].caption == b[i].caption);
    CHECK(a[i].id == b[i].id);
    CHECK(std::regex_match(a[i].caption, grammar));
    sides.insert(a[i].image.height);
    sides.insert(a[i].image.width);
    for (float v : a[i].image.pixels) CHECK((v >= 0.0F && v <= 1.0F));
  }
  CHECK(sides.size() > 5);
  CHECK(synth_generate(6, 40)[0].image != a[0].image);
}

TEST_CASE("rasterized shapes match their analytic area") {
  for (auto kind : {ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle}) {
    for (double r : {6.0, 15.5, 40.0}) {
      Image img(200, 200, 0.0F);
      const ShapeSpec s{kind, 100.3, 99.6, r, {255, 0, 0}};
      const double painted = static_cast<double>(rasterize(img, s));
      const double area = shape_area(s);
      // Boundary pixels: at most about one pixel per unit of perimeter.
      const double perimeter = kind == ShapeKind::Circle   ? 2 * M_PI * r
                               : kind == ShapeKind::Square ? 8 * r
                                                           : (2 + 2 * std::sqrt(1.25)) * r;
      CHECK(std::abs(painted - area) <= perimeter);
      double red = 0;
      for (std::size_t i = 0; i < img.pixels.size(); i += 3) red += img.pixels[i];
      CHECK(red == painted);
    }
  }
}

TEST_CASE("PNG and manifest round trip") {
  const fs::path dir = fs::temp_directory_path() / "genlip_imaging_test";
  fs::remove_all(dir);
  fs::create_directories(dir / "images");
  const auto samples = synth_generate(9, 4);
  std::vector<ManifestRecord> records;
  for (const auto& s : samples) {
    const std::string rel = "images/" + s.id + ".png";
    write_png(dir / rel, s.image);
    CHECK(read_png(dir / rel) == s.image);
    records.push_back({s.id, rel, s.caption});
  }
  write_manifest(dir / "manifest.jsonl", records);
  const auto back = read_manifest(dir / "manifest.jsonl");
  REQUIRE(back.size() == records.size());
  const auto loaded = load_manifest_samples(dir / "manifest.jsonl");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(back[i].id == records[i].id);
    CHECK(back[i].caption == records[i].caption);
    CHECK(loaded[i].image == samples[i].image);
    CHECK(loaded[i].caption == samples[i].caption);
  }
  CHECK_THROWS(read_png(dir / "missing.png"));
  fs::remove_all(dir);
}
