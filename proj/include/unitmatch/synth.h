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
#include <string>
#include <vector>

#include "unitmatch/corpus.h"

namespace unitmatch {

// Synthetic retrieval task whose essential matching unit is known. Each
// query owns `words_per_query` signal words that appear, all together, in
// exactly one sentence of exactly one passage; every other sentence is built
// from a disjoint distractor vocabulary.
struct SynthSpec {
  std::size_t queries = 250;
  std::size_t heldout = 50;  // last queries, written to the test qrels
  std::size_t distractors = 3;
  std::size_t signal_vocab = 1000;
  std::size_t distractor_vocab = 400;
  std::size_t words_per_query = 3;
  std::size_t words_per_sentence = 5;
  std::uint64_t seed = 1;

  // Throws UsageError when the sizes cannot be honoured.
  void validate() const;
};

struct GoldLabel {
  std::string query_id;
  std::string passage_id;
  std::size_t unit = 0;
};

struct SynthDataset {
  std::vector<Document> corpus;
  std::vector<Document> queries;
  Qrels train_qrels;
  Qrels test_qrels;
  std::vector<GoldLabel> gold;
};

SynthDataset synthesize(const SynthSpec& spec);

// BEIR layout: corpus.jsonl, queries.jsonl, qrels/train.tsv, qrels/test.tsv,
// plus gold.tsv (query-id, corpus-id, unit index).
void write_dataset(const std::filesystem::path& dir, const SynthDataset& data);

std::vector<GoldLabel> load_gold(const std::filesystem::path& path);

void write_qrels(const std::filesystem::path& path, const Qrels& qrels);

}  // namespace unitmatch
