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

#include "unitmatch/corpus.h"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "json.hpp"

namespace unitmatch {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

// Trims [begin, end) and appends it unless blank.
void push_trimmed(std::string_view text, std::size_t begin, std::size_t end,
                  std::vector<CharSpan>& out) {
  while (begin < end && is_space(text[begin])) ++begin;
  while (end > begin && is_space(text[end - 1])) --end;
  if (begin < end) out.push_back({begin, end});
}

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::vector<Document> load_jsonl(const std::filesystem::path& path,
                                 bool with_title) {
  std::ifstream in = open_input(path);
  std::vector<Document> docs;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), is_space)) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where(path, line_no) + "malformed JSON: " + e.what());
    }
    if (!obj.is_object() || !obj.contains("_id") || !obj["_id"].is_string() ||
        !obj.contains("text") || !obj["text"].is_string()) {
      throw DataError(where(path, line_no) +
                      "expected string fields \"_id\" and \"text\"");
    }
    Document doc{obj["_id"].get<std::string>(), obj["text"].get<std::string>()};
    if (with_title && obj.contains("title")) {
      if (!obj["title"].is_string()) {
        throw DataError(where(path, line_no) + "\"title\" must be a string");
      }
      auto title = obj["title"].get<std::string>();
      if (!title.empty()) doc.text = title + ". " + doc.text;
    }
    if (!seen.insert(doc.id).second) {
      throw DataError(where(path, line_no) + "duplicate id '" + doc.id + "'");
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{"[CLS]", "[UNK]"}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens)
    : id_to_token_(std::move(tokens)) {
  if (id_to_token_.size() < 2 || id_to_token_[kClsId] != "[CLS]" ||
      id_to_token_[kUnkId] != "[UNK]") {
    throw DataError("vocabulary must start with [CLS], [UNK]");
  }
  token_to_id_.reserve(id_to_token_.size());
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    if (!token_to_id_.emplace(id_to_token_[i], static_cast<TokenId>(i)).second) {
      throw DataError("duplicate vocabulary entry '" + id_to_token_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::build(std::span<const std::string> texts) {
  std::set<std::string> words;
  for (const auto& text : texts) {
    for (auto& w : split_words(text)) words.insert(std::move(w.text));
  }
  std::vector<std::string> tokens{"[CLS]", "[UNK]"};
  // Bracketed specials can never be produced by split_words.
  tokens.insert(tokens.end(), words.begin(), words.end());
  return Vocabulary(std::move(tokens));
}

TokenId Vocabulary::id(std::string_view word) const {
  auto it = token_to_id_.find(std::string(word));
  if (it == token_to_id_.end() || it->second == kClsId) return kUnkId;
  return it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw DataError("token id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<Word> split_words(std::string_view text) {
  std::vector<Word> words;
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto length = static_cast<std::int32_t>(text.size());
  std::int32_t pos = 0;
  Word current;
  bool in_word = false;
  while (pos < length) {
    const std::int32_t start = pos;
    UChar32 c;
    U8_NEXT(bytes, pos, length, c);
    if (c >= 0 && u_isalnum(c)) {
      if (!in_word) {
        current = Word{{}, static_cast<std::size_t>(start), 0};
        in_word = true;
      }
      UChar32 lower = u_tolower(c);
      char buf[U8_MAX_LENGTH];
      std::int32_t n = 0;
      U8_APPEND_UNSAFE(buf, n, lower);
      current.text.append(buf, static_cast<std::size_t>(n));
      current.char_end = static_cast<std::size_t>(pos);
    } else if (in_word) {
      words.push_back(std::move(current));
      in_word = false;
    }
  }
  if (in_word) words.push_back(std::move(current));
  return words;
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab,
                       std::size_t max_len) {
  TokenSequence ids{kClsId};
  for (const auto& w : split_words(text)) {
    if (ids.size() >= max_len) break;
    ids.push_back(vocab.id(w.text));
  }
  return ids;
}

std::vector<CharSpan> segment_units(std::string_view text) {
  std::vector<CharSpan> spans;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (is_terminal(text[i]) && (i + 1 == text.size() || is_space(text[i + 1]))) {
      push_trimmed(text, start, i + 1, spans);
      start = i + 1;
    }
  }
  push_trimmed(text, start, text.size(), spans);
  return spans;
}

std::vector<UnitSpan> align_units(std::string_view text,
                                  std::span<const CharSpan> spans,
                                  const Vocabulary& vocab, std::size_t max_len) {
  (void)vocab;  // unknown words still occupy a position
  const auto words = split_words(text);
  const std::size_t kept = std::min(words.size(), max_len - 1);
  std::vector<UnitSpan> units;
  std::size_t w = 0;
  for (const auto& span : spans) {
    while (w < words.size() && words[w].char_start < span.begin) ++w;
    const std::size_t first = w;
    while (w < words.size() && words[w].char_start < span.end) ++w;
    const std::size_t last = std::min(w, kept);
    if (last <= first) continue;
    UnitSpan unit;
    unit.index = units.size();
    unit.char_start = span.begin;
    unit.char_end = last < w ? words[last - 1].char_end : span.end;
    unit.tok_start = first + 1;
    unit.tok_end = last + 1;
    units.push_back(unit);
  }
  if (units.empty()) throw DataError("untokenizable passage");
  return units;
}

Passage make_passage(const Document& doc, const Vocabulary& vocab,
                     std::size_t max_len) {
  if (max_len < 2) throw UsageError("max_len must be at least 2");
  Passage p{doc.id, doc.text, tokenize(doc.text, vocab, max_len), {}};
  try {
    p.units = align_units(doc.text, segment_units(doc.text), vocab, max_len);
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + " '" + doc.id + "'");
  }
  return p;
}

Query make_query(const Document& doc, const Vocabulary& vocab,
                 std::size_t max_len) {
  if (max_len < 2) throw UsageError("max_len must be at least 2");
  Query q{doc.id, doc.text, tokenize(doc.text, vocab, max_len)};
  if (q.tokens.size() < 2) throw DataError("empty query '" + doc.id + "'");
  return q;
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
  return load_jsonl(path, true);
}

std::vector<Document> load_queries(const std::filesystem::path& path) {
  auto queries = load_jsonl(path, false);
  for (const auto& q : queries) {
    if (split_words(q.text).empty()) {
      throw DataError(path.string() + ": query '" + q.id + "' has no tokens");
    }
  }
  return queries;
}

void Qrels::set(const std::string& query_id, const std::string& doc_id,
                int rel) {
  table_[query_id][doc_id] = rel;
}

int Qrels::relevance(const std::string& query_id,
                     const std::string& doc_id) const {
  auto q = table_.find(query_id);
  if (q == table_.end()) return 0;
  auto d = q->second.find(doc_id);
  return d == q->second.end() ? 0 : d->second;
}

const std::map<std::string, int>& Qrels::judgments(
    const std::string& query_id) const {
  static const std::map<std::string, int> kEmpty;
  auto q = table_.find(query_id);
  return q == table_.end() ? kEmpty : q->second;
}

std::size_t Qrels::size() const {
  std::size_t n = 0;
  for (const auto& [q, docs] : table_) n += docs.size();
  return n;
}

Qrels load_qrels(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  Qrels qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (line_no == 1 && fields.size() == 3 && fields[0] == "query-id" &&
        fields[1] == "corpus-id" && fields[2] == "score") {
      continue;
    }
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
      throw DataError(where(path, line_no) +
                      "expected query-id<TAB>corpus-id<TAB>score");
    }
    int rel = 0;
    std::size_t used = 0;
    try {
      rel = std::stoi(std::string(fields[2]), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != fields[2].size() || rel < 0) {
      throw DataError(where(path, line_no) + "relevance must be an integer >= 0");
    }
    qrels.set(std::string(fields[0]), std::string(fields[1]), rel);
  }
  return qrels;
}

void check_qrels(const Qrels& qrels, std::span<const Document> queries,
                 std::span<const Document> corpus) {
  auto query_index = index_by_id(queries);
  auto doc_index = index_by_id(corpus);
  for (const auto& [qid, docs] : qrels.all()) {
    if (!query_index.contains(qid)) {
      throw DataError("qrels reference unknown query '" + qid + "'");
    }
    for (const auto& [did, rel] : docs) {
      if (!doc_index.contains(did)) {
        throw DataError("qrels reference unknown passage '" + did + "'");
      }
    }
  }
}

std::vector<std::string> texts_of(std::span<const Document> docs) {
  std::vector<std::string> texts;
  texts.reserve(docs.size());
  for (const auto& d : docs) texts.push_back(d.text);
  return texts;
}

}  // namespace unitmatch
