// src/serialize.cpp
//
// Copyright 2026 The sq2s Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sq2s/serialize.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "sq2s/common.hpp"

namespace sq2s {

namespace {

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void get_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw UsageError(std::string("serialize: truncated ") + what);
  }
}

void put_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  put_bytes(os, b, 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  put_bytes(os, b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  put_bytes(os, b, 8);
}

std::uint16_t get_u16(std::istream& is, const char* what) {
  unsigned char b[2];
  get_bytes(is, b, 2, what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  get_bytes(is, b, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is, const char* what) {
  unsigned char b[8];
  get_bytes(is, b, 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f32(std::ostream& os, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(os, v);
}

float get_f32(std::istream& is, const char* what) {
  std::uint32_t v = get_u32(is, what);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write("SQ2T", 4);
  if (t.rank() > 255) throw std::invalid_argument("serialize: rank > 255");
  const std::uint8_t rank = static_cast<std::uint8_t>(t.rank());
  put_bytes(os, &rank, 1);
  for (std::int64_t d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) {
      throw std::invalid_argument("serialize: dimension too large");
    }
    put_u32(os, static_cast<std::uint32_t>(d));
  }
  for (float v : t.data()) put_f32(os, v);
}

Tensor read_tensor(std::istream& is) {
  char magic[4];
  get_bytes(is, magic, 4, "tensor magic");
  if (std::memcmp(magic, "SQ2T", 4) != 0) {
    throw UsageError("serialize: bad tensor magic");
  }
  std::uint8_t rank;
  get_bytes(is, &rank, 1, "tensor rank");
  if (rank == 0) throw UsageError("serialize: zero-rank tensor");
  Shape shape(rank);
  for (int i = 0; i < rank; ++i) {
    shape[static_cast<std::size_t>(i)] =
        static_cast<std::int64_t>(get_u32(is, "tensor dims"));
    if (shape[static_cast<std::size_t>(i)] <= 0) {
      throw UsageError("serialize: non-positive tensor dim");
    }
  }
  const std::int64_t n = shape_numel(shape);
  std::vector<float> data(static_cast<std::size_t>(n));
  for (auto& v : data) v = get_f32(is, "tensor payload");
  return Tensor::from_data(std::move(shape), std::move(data));
}

void write_tensor_file(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UsageError("serialize: cannot write " + path);
  write_tensor(os, t);
  if (!os) throw UsageError("serialize: short write to " + path);
}

Tensor read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("serialize: cannot open " + path);
  return read_tensor(is);
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UsageError("checkpoint: cannot write " + path);
  os.write("SQ2C", 4);
  put_u32(os, ckpt.version);
  put_u64(os, fnv1a64(ckpt.config_text));
  put_u32(os, static_cast<std::uint32_t>(ckpt.config_text.size()));
  put_bytes(os, ckpt.config_text.data(), ckpt.config_text.size());
  put_u32(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    put_u16(os, static_cast<std::uint16_t>(name.size()));
    put_bytes(os, name.data(), name.size());
    write_tensor(os, tensor);
  }
  if (!os) throw UsageError("checkpoint: short write to " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("checkpoint: cannot open " + path);
  char magic[4];
  get_bytes(is, magic, 4, "checkpoint magic");
  if (std::memcmp(magic, "SQ2C", 4) != 0) {
    throw UsageError("checkpoint: bad magic in " + path);
  }
  Checkpoint ckpt;
  ckpt.version = get_u32(is, "checkpoint version");
  if (ckpt.version != 1) {
    throw UsageError("checkpoint: unsupported version " +
                     std::to_string(ckpt.version));
  }
  const std::uint64_t hash = get_u64(is, "config hash");
  const std::uint32_t text_len = get_u32(is, "config length");
  ckpt.config_text.resize(text_len);
  get_bytes(is, ckpt.config_text.data(), text_len, "config text");
  if (fnv1a64(ckpt.config_text) != hash) {
    throw UsageError("checkpoint: config hash mismatch in " + path);
  }
  const std::uint32_t count = get_u32(is, "tensor count");
  ckpt.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = get_u16(is, "tensor name length");
    std::string name(name_len, '\0');
    get_bytes(is, name.data(), name_len, "tensor name");
    ckpt.tensors.emplace_back(std::move(name), read_tensor(is));
  }
  return ckpt;
}

}  // namespace sq2s
