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
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "unitmatch/error.h"

namespace unitmatch {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

inline constexpr TokenId kClsId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr std::size_t kDefaultMaxLen = 128;

// Token <-> id mapping. Ids 0 and 1 are always [CLS] and [UNK]; the
// remaining ids are assigned to the sorted set of observed words.
class Vocabulary {
 public:
  Vocabulary();
  // `tokens` must start with "[CLS]", "[UNK]" and hold no duplicates.
  explicit Vocabulary(std::vector<std::string> tokens);

  // Builds from every word of `texts` (min frequency 1).
  static Vocabulary build(std::span<const std::string> texts);

  TokenId id(std::string_view word) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const { return id_to_token_.size(); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  bool operator==(const Vocabulary& other) const {
    return id_to_token_ == other.id_to_token_;
  }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

// A lowercased alphanumeric run and the byte range it came from.
struct Word {
  std::string text;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
};

// Splits UTF-8 text into maximal runs of Unicode letters/digits, lowercased.
std::vector<Word> split_words(std::string_view text);

// [CLS] followed by the ids of `text`'s words, truncated to `max_len`.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab,
                       std::size_t max_len);

// Half-open byte range [begin, end) into a text.
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const CharSpan&) const = default;
};

// Sentence units: a unit ends after '.', '!' or '?' that is followed by
// whitespace or the end of text. Leading/trailing whitespace is trimmed and
// blank candidates are dropped.
std::vector<CharSpan> segment_units(std::string_view text);

struct UnitSpan {
  std::size_t index = 0;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  std::size_t tok_start = 0;  // inclusive, >= 1
  std::size_t tok_end = 0;    // exclusive
  std::size_t token_count() const { return tok_end - tok_start; }
  bool operator==(const UnitSpan&) const = default;
};

// Maps sentence spans onto the truncated token sequence of `text`. Units
// that lose every token to truncation are dropped and the rest renumbered;
// a partially truncated unit is clipped (token range and char range).
// Throws DataError("untokenizable passage") when nothing survives.
std::vector<UnitSpan> align_units(std::string_view text,
                                  std::span<const CharSpan> spans,
                                  const Vocabulary& vocab, std::size_t max_len);

struct Passage {
  std::string id;
  std::string text;
  TokenSequence tokens;
  std::vector<UnitSpan> units;
};

struct Query {
  std::string id;
  std::string text;
  TokenSequence tokens;
};

// Raw record from corpus.jsonl / queries.jsonl.
struct Document {
  std::string id;
  std::string text;
};

Passage make_passage(const Document& doc, const Vocabulary& vocab,
                     std::size_t max_len = kDefaultMaxLen);
Query make_query(const Document& doc, const Vocabulary& vocab,
                 std::size_t max_len = kDefaultMaxLen);

// corpus.jsonl: {"_id", "text", optional "title"}; a non-empty title is
// prepended as "<title>. <text>".
std::vector<Document> load_corpus(const std::filesystem::path& path);
// queries.jsonl: {"_id", "text"}. Queries without any word are rejected.
std::vector<Document> load_queries(const std::filesystem::path& path);

// query id -> (corpus id -> relevance)
class Qrels {
 public:
  void set(const std::string& query_id, const std::string& doc_id, int rel);
  int relevance(const std::string& query_id, const std::string& doc_id) const;
  // Judgments for one query; empty when the query is unjudged.
  const std::map<std::string, int>& judgments(const std::string& query_id) const;
  const std::map<std::string, std::map<std::string, int>>& all() const {
    return table_;
  }
  std::size_t size() const;

 private:
  std::map<std::string, std::map<std::string, int>> table_;
};

// qrels.tsv: query-id TAB corpus-id TAB relevance (>= 0); an optional
// "query-id corpus-id score" header is skipped.
Qrels load_qrels(const std::filesystem::path& path);

// Throws DataError when a judgment names an unknown query or passage.
void check_qrels(const Qrels& qrels, std::span<const Document> queries,
                 std::span<const Document> corpus);

// id -> position; throws DataError naming the first duplicated id.
template <typename Record>
std::unordered_map<std::string, std::size_t> index_by_id(
    std::span<const Record> records) {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!index.emplace(records[i].id, i).second) {
      throw DataError("duplicate id '" + records[i].id + "'");
    }
  }
  return index;
}

std::vector<std::string> texts_of(std::span<const Document> docs);

}  // namespace unitmatch
