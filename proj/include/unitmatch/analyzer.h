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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "unitmatch/encoder.h"
#include "unitmatch/objective.h"

namespace unitmatch {

// Population variance of a probability vector.
double distribution_variance(const Vector& probs);

// Mean |cos(e_i, e_j)| over unit pairs i < j. Rows with zero norm are left
// out and counted in `excluded`. Returns NaN when fewer than two rows remain.
double mean_abs_cosine(const Matrix& units, std::size_t* excluded = nullptr);

// Lowest-index argmax of units * match.
std::size_t extracted_unit(const Vector& match, const Matrix& units);

// Mean over pairs with n >= 2 of the variance of softmax(E t_p). Throws
// DataError when no pair has two units.
double unit_balance_variance(const EncoderParams& params,
                             std::span<const TrainingPair> pairs,
                             std::size_t threads = 1);

// Share of pairs where argmax_i dot(m, e_i) is the annotated unit. Throws
// DataError on an empty sample.
double emu_accuracy(const EncoderParams& params, std::span<const TrainingPair> pairs,
                    std::size_t threads = 1);

struct DispersionResult {
  double mean_abs_cosine = 0.0;
  std::size_t passages = 0;
  std::size_t excluded_units = 0;
};

// Averages mean_abs_cosine over passages with n >= 2.
DispersionResult unit_dispersion(const EncoderParams& params,
                                 std::span<const Passage* const> passages,
                                 std::size_t threads = 1);

struct DiagnosticsReport {
  double balance_variance = 0.0;
  double emu_accuracy = 0.0;
  double dispersion = 0.0;
  std::size_t samples = 0;
  std::size_t balance_samples = 0;
  std::size_t dispersion_samples = 0;
  std::size_t excluded_units = 0;

  nlohmann::json to_json() const;
};

// Runs all diagnostics on at most `sample_size` pairs, subsampled with
// `seed` when the input is larger.
DiagnosticsReport analyze(const EncoderParams& params, std::span<const TrainingPair> pairs,
                          std::size_t sample_size = 10000, std::uint64_t seed = 0,
                          std::size_t threads = 1);

enum class EmbeddingKind { kText, kMatching, kUnit };

struct ExportSource {
  std::string domain;
  std::span<const Passage> passages;
  std::span<const TrainingPair> pairs;  // needed for matching rows
};

// TSV rows: id, domain, kind, v components. Text rows per passage, unit
// rows "<passage>#<i>", matching rows "<query>|<passage>".
void export_embeddings(const std::filesystem::path& path, const EncoderParams& params,
                       std::span<const ExportSource> sources,
                       const std::set<EmbeddingKind>& kinds);

EmbeddingKind parse_embedding_kind(const std::string& name);

}  // namespace unitmatch
