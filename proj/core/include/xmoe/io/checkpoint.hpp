// Copyright 2026 The xmoe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xmoe/training/model.hpp"

namespace xmoe::io {

// File layout:
//   "GVMC-1\n"
//   <manifest byte count>"\n"
//   <manifest: JSON object>
//   <payload: tensors back to back, little-endian f32 or f64>
// The manifest lists each tensor's name, shape and element offset, plus the
// model config, seed, stage, id maps and the vocabulary.
inline constexpr const char* kCheckpointMagic = "GVMC-1";

enum class Dtype { kF32, kF64 };

struct TensorEntry {
  std::string name;
  Shape shape;
  std::size_t offset = 0;  // in elements from the payload start
};

struct CheckpointInfo {
  std::string format;
  Dtype dtype = Dtype::kF32;
  int stage = 0;
  std::uint64_t seed = 0;
  std::vector<TensorEntry> tensors;
  std::size_t payload_bytes = 0;
};

/// Writes every model parameter. f32 rounds each value to nearest.
void save_checkpoint(const std::filesystem::path& path, const training::Model& model, Dtype dtype = Dtype::kF32);

/// Rebuilds the model from the manifest and fills in all tensors. Throws
/// IoError for unreadable/truncated files and a format-version mismatch.
training::Model load_checkpoint(const std::filesystem::path& path);

/// Manifest and tensor directory only.
CheckpointInfo inspect_checkpoint(const std::filesystem::path& path);

/// ModelConfig <-> JSON text, shared with run manifests.
std::string model_config_json(const training::ModelConfig& config);
training::ModelConfig model_config_from_json(const std::string& text);

}  // namespace xmoe::io
