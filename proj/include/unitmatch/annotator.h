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
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "unitmatch/corpus.h"

namespace unitmatch {

struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;
};

// Okapi statistics over a collection of sentence units.
class Bm25Stats {
 public:
  // Throws DataError when `units` is empty or every unit is empty.
  static Bm25Stats build(std::span<const std::span<const TokenId>> units,
                         Bm25Params params = {});

  std::size_t unit_count() const { return unit_count_; }
  double avgdl() const { return avgdl_; }
  std::size_t df(TokenId token) const;
  // ln((N - df + 0.5) / (df + 0.5) + 1)
  double idf(TokenId token) const;
  const Bm25Params& params() const { return params_; }

 private:
  std::size_t unit_count_ = 0;
  double avgdl_ = 0.0;
  std::unordered_map<TokenId, std::size_t> df_;
  Bm25Params params_;
};

// Sum over the unique query terms (special ids ignored). 0 when nothing
// is shared.
double bm25_score(std::span<const TokenId> query, std::span<const TokenId> unit,
                  const Bm25Stats& stats);

// Tokens [tok_start, tok_end) of `passage`.
std::span<const TokenId> unit_tokens(const Passage& passage, const UnitSpan& unit);

// Answer-start probabilities from an external reader, indexed like the
// passage token sequence (position 0 is [CLS]).
struct ReaderDistribution {
  std::string query_id;
  std::string passage_id;
  std::vector<double> probs;
};

// max(A[tok_start, tok_end)). Throws DataError("reader/passage length
// mismatch") when the span runs past A.
double reader_unit_score(std::span<const double> probs, const UnitSpan& unit);

struct AnnotatedPair {
  std::string query_id;
  std::string passage_id;
  std::vector<UnitSpan> units;
  std::vector<double> hybrid;  // H
  std::vector<int> label;      // Y, one-hot

  std::size_t label_index() const;
};

// Index of the largest value; ties resolve to the lowest index.
std::size_t argmax_lowest(std::span<const double> values);

// h_i = bm25(q, u_i) + delta * r_i with r_i = 0 when `reader` is null.
AnnotatedPair annotate_pair(const Query& query, const Passage& passage,
                            const Bm25Stats& stats, double delta,
                            const ReaderDistribution* reader = nullptr);

struct AnnotatorConfig {
  double delta = 0.1;
  Bm25Params bm25;
  std::size_t max_len = kDefaultMaxLen;
};

struct AnnotationSummary {
  std::size_t pairs = 0;
  std::size_t with_reader = 0;
  double mean_units = 0.0;
  std::map<std::size_t, std::size_t> label_histogram;  // label index -> count
};

// Reader distributions keyed by (query id, passage id).
using ReaderTable =
    std::map<std::pair<std::string, std::string>, std::vector<double>>;

ReaderTable load_reader(const std::filesystem::path& path);

// Annotates every judged pair with relevance > 0. The BM25 statistics are
// collected over the units of the distinct positive passages.
std::vector<AnnotatedPair> annotate_dataset(std::span<const Query> queries,
                                            std::span<const Passage> passages,
                                            const Qrels& qrels,
                                            const AnnotatorConfig& config,
                                            const ReaderTable* reader = nullptr,
                                            AnnotationSummary* summary = nullptr);

void write_annotations(const std::filesystem::path& path,
                       std::span<const AnnotatedPair> pairs);
// Validates the one-hot label and that it sits on argmax(H).
std::vector<AnnotatedPair> read_annotations(const std::filesystem::path& path);

}  // namespace unitmatch
