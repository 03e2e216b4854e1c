// Copyright 2026 The GenLIP Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint layout (all integers u32 little-endian, values float32 LE):
//   "GENLIPCK" | version | header length | header JSON {"model", "meta"}
//   | tensor count | per tensor: name length, name, rank, dims..., values
// Feature dumps: "GLTENSOR" | version | rank | dims... | values

#include <bit>
#include <cstring>
#include <fstream>

#include "genlip/errors.hpp"
#include "genlip/model.hpp"

namespace genlip {

namespace {

constexpr char kCheckpointMagic[8] = {'G', 'E', 'N', 'L', 'I', 'P', 'C', 'K'};
constexpr char kDumpMagic[8] = {'G', 'L', 'T', 'E', 'N', 'S', 'O', 'R'};
constexpr std::uint32_t kDumpVersion = 1;

void expect_magic(std::istream& in, const char (&magic)[8], const std::filesystem::path& path) {
  char buf[8] = {};
  in.read(buf, 8);
  if (!in || std::memcmp(buf, magic, 8) != 0) {
    throw FormatError(path.string() + ": unrecognized file header");
  }
}

std::string read_string(std::istream& in, std::size_t limit) {
  const std::uint32_t len = read_u32(in);
  if (len > limit) throw FormatError("string field of " + std::to_string(len) + " bytes");
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw FormatError("truncated string field");
  return s;
}

Shape read_shape(std::istream& in) {
  const std::uint32_t rank = read_u32(in);
  if (rank > 8) throw FormatError("tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = read_u32(in);
  return shape;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError("unexpected end of file");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

void write_f32s(std::ostream& out, std::span<const float> values) {
  for (float v : values) write_u32(out, std::bit_cast<std::uint32_t>(v));
}

std::vector<float> read_f32s(std::istream& in, std::size_t count) {
  std::vector<float> v(count);
  for (auto& x : v) x = std::bit_cast<float>(read_u32(in));
  return v;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model,
                     const nlohmann::json& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot write " + path.string());
  out.write(kCheckpointMagic, 8);
  write_u32(out, kCheckpointVersion);
  const std::string header = nlohmann::json{{"model", model.config()}, {"meta", meta}}.dump();
  write_u32(out, static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  const auto params = model.named_parameters();
  write_u32(out, static_cast<std::uint32_t>(params.size()));
  std::vector<float> buf;
  for (const auto& p : params) {
    write_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_u32(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) write_u32(out, static_cast<std::uint32_t>(d));
    buf.assign(p.tensor.data().begin(), p.tensor.data().end());
    write_f32s(out, buf);
  }
  if (!out) throw DataError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path.string());
  expect_magic(in, kCheckpointMagic, path);
  const std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": checkpoint version " + std::to_string(version) +
                      " is not supported");
  }
  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(read_string(in, 1u << 24));
    ckpt.config = header.at("model").get<ModelConfig>();
    ckpt.meta = header.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint header: " + e.what());
  }
  const std::uint32_t count = read_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = read_string(in, 4096);
    t.shape = read_shape(in);
    t.values = read_f32s(in, shape_numel(t.shape));
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

template <typename T>
Model<T> model_from_checkpoint(const Checkpoint& ckpt) {
  Model<T> model(ckpt.config, 0);
  std::vector<std::pair<std::string, std::vector<float>>> named;
  named.reserve(ckpt.tensors.size());
  for (const auto& t : ckpt.tensors) named.emplace_back(t.name, t.values);
  model.load_values(named);
  return model;
}

void write_tensor_dump(const std::filesystem::path& path, const Shape& shape,
                       std::span<const float> values) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor dump: shape " + shape_to_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("tensor dump: cannot write " + path.string());
  out.write(kDumpMagic, 8);
  write_u32(out, kDumpVersion);
  write_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) write_u32(out, static_cast<std::uint32_t>(d));
  write_f32s(out, values);
  if (!out) throw DataError("tensor dump: write failed for " + path.string());
}

StoredTensor read_tensor_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("tensor dump: cannot open " + path.string());
  expect_magic(in, kDumpMagic, path);
  if (read_u32(in) != kDumpVersion) throw FormatError(path.string() + ": unsupported dump version");
  StoredTensor t;
  t.name = path.filename().string();
  t.shape = read_shape(in);
  t.values = read_f32s(in, shape_numel(t.shape));
  return t;
}

template void save_checkpoint(const std::filesystem::path&, const Model<float>&,
                              const nlohmann::json&);
template void save_checkpoint(const std::filesystem::path&, const Model<double>&,
                              const nlohmann::json&);
template Model<float> model_from_checkpoint(const Checkpoint&);
template Model<double> model_from_checkpoint(const Checkpoint&);

}  // namespace genlip
