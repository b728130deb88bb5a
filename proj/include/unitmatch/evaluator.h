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
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "unitmatch/corpus.h"
#include "unitmatch/encoder.h"

namespace unitmatch {

enum class Precision { kF64, kF32 };

Precision parse_precision(const std::string& name);

struct EncodeOptions {
  std::size_t max_len = kDefaultMaxLen;
  std::size_t threads = 1;
  Precision precision = Precision::kF64;
};

// Text representations, one row per document, in input order.
struct EncodedTexts {
  std::vector<std::string> ids;
  Matrix vectors;
};

// Encodes every document's [CLS] state. Throws DataError("vocabulary
// mismatch") when `vocab` does not belong to `params`.
EncodedTexts encode_texts(const EncoderParams& params, const Vocabulary& vocab,
                          std::span<const Document> docs,
                          const EncodeOptions& options = {});

struct ScoredPassage {
  std::string id;
  double score = 0.0;
};
using RankedList = std::vector<ScoredPassage>;

// Exact top-k by dot product; ties go to the lexicographically smaller id.
RankedList retrieve(const Vector& query, const EncodedTexts& corpus, std::size_t k);

// query id -> ranking
using RetrievalRun = std::map<std::string, RankedList>;

RetrievalRun retrieve_all(const EncodedTexts& queries, const EncodedTexts& corpus,
                          std::size_t k, std::size_t threads = 1);

// TSV: query-id, passage-id, rank (1-based), score.
void write_run(const std::filesystem::path& path, const RetrievalRun& run);

// Per-query nDCG@k with gain 2^rel - 1 over the queries of `run` that have
// at least one relevant judgment.
std::map<std::string, double> ndcg_per_query(const RetrievalRun& run,
                                             const Qrels& qrels, std::size_t k = 10);
double ndcg_at_k(const RetrievalRun& run, const Qrels& qrels, std::size_t k = 10);

// Fraction of those queries with a relevant passage in the top k.
double top_k_hit(const RetrievalRun& run, const Qrels& qrels, std::size_t k = 20);

// Number of queries contributing to the means above.
std::size_t judged_query_count(const RetrievalRun& run, const Qrels& qrels);

// 100 * |A n B| / |A u B| over lowercased word sets.
double jaccard_unigrams(std::span<const std::string> corpus_a,
                        std::span<const std::string> corpus_b);

struct DatasetMetrics {
  double ndcg = 0.0;
  double top_k = 0.0;
  std::size_t queries = 0;
};

struct MetricsReport {
  std::size_t ndcg_cutoff = 10;
  std::size_t hit_cutoff = 20;
  std::map<std::string, DatasetMetrics> datasets;
  nlohmann::json config = nlohmann::json::object();

  double mean_ndcg() const;
  double mean_top_k() const;
  nlohmann::json to_json() const;
};

}  // namespace unitmatch
