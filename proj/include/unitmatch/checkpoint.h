// Copyright 2026 The Unitmatch Authors.
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

#include <cstdint>
#include <filesystem>
#include <optional>

#include "json.hpp"
#include "unitmatch/corpus.h"
#include "unitmatch/encoder.h"

namespace unitmatch {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Adam moments and loop position, present in resumable checkpoints.
struct OptimizerState {
  EncoderParams first_moment;
  EncoderParams second_moment;
  std::uint64_t step = 0;
};

// On disk: "UMCK", u32 version, u64 header length, a JSON header naming the
// architecture, vocabulary and tensor shapes, then every tensor as
// little-endian float64 in header order (column-major).
struct Checkpoint {
  Vocabulary vocab;
  EncoderParams params;
  std::optional<OptimizerState> optimizer;
  nlohmann::json metadata = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace unitmatch
