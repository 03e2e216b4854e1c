// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <png.h>

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "genlip/errors.hpp"
#include "genlip/image.hpp"

namespace genlip {

Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw DataError("read_png: " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw DataError("read_png: " + path.string() + ": " + message);
  }
  Image img(png.height, png.width);
  for (std::size_t i = 0; i < buffer.size(); ++i) img.pixels[i] = buffer[i] / 255.0F;
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.height == 0 || img.width == 0) throw DataError("write_png: empty image");
  std::vector<png_byte> buffer(img.pixels.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const float v = std::clamp(img.pixels[i], 0.0F, 1.0F);
    buffer[i] = static_cast<png_byte>(std::lround(v * 255.0F));
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw DataError("write_png: " + path.string() + ": " + png.message);
  }
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest: cannot open " + path.string());
  std::vector<ManifestRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      records.push_back({j.at("id").get<std::string>(), j.at("image").get<std::string>(),
                         j.at("caption").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest " + path.string() + ":" + std::to_string(lineno) + ": " +
                        e.what());
    }
  }
  return records;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("manifest: cannot write " + path.string());
  for (const auto& r : records) {
    out << nlohmann::json{{"id", r.id}, {"image", r.image}, {"caption", r.caption}}.dump() << '\n';
  }
  if (!out) throw DataError("manifest: write failed for " + path.string());
}

std::vector<ImageSample> load_manifest_samples(const std::filesystem::path& path) {
  const auto base = path.parent_path();
  std::vector<ImageSample> samples;
  for (auto& rec : read_manifest(path)) {
    std::filesystem::path img_path(rec.image);
    if (img_path.is_relative()) img_path = base / img_path;
    samples.push_back({read_png(img_path), std::move(rec.caption), std::move(rec.id)});
  }
  return samples;
}

}  // namespace genlip
