// sq2s/serialize.hpp
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

// Binary formats:
//   tensor     "SQ2T" | u8 rank | u32-LE dims | f32-LE payload
//   checkpoint "SQ2C" | u32-LE version | u64-LE config hash |
//              u32-LE config text length | text |
//              u32-LE tensor count | per tensor: u16-LE name length, name,
//              tensor record

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "sq2s/tensor.hpp"

namespace sq2s {

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void write_tensor_file(const std::string& path, const Tensor& t);
Tensor read_tensor_file(const std::string& path);

struct Checkpoint {
  std::uint32_t version = 1;
  std::string config_text;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace sq2s
