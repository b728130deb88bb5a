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

#include "unitmatch/annotator.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"

namespace unitmatch {

namespace {

bool is_special(TokenId t) { return t == kClsId || t == kUnkId; }

}  // namespace

Bm25Stats Bm25Stats::build(std::span<const std::span<const TokenId>> units,
                           Bm25Params params) {
  if (units.empty()) throw DataError("BM25 statistics need at least one unit");
  Bm25Stats stats;
  stats.params_ = params;
  stats.unit_count_ = units.size();
  std::size_t total = 0;
  for (const auto unit : units) {
    total += unit.size();
    std::set<TokenId> unique(unit.begin(), unit.end());
    for (TokenId t : unique) ++stats.df_[t];
  }
  stats.avgdl_ = static_cast<double>(total) / static_cast<double>(units.size());
  if (!(stats.avgdl_ > 0.0)) throw DataError("BM25 statistics over empty units");
  return stats;
}

std::size_t Bm25Stats::df(TokenId token) const {
  auto it = df_.find(token);
  return it == df_.end() ? 0 : it->second;
}

double Bm25Stats::idf(TokenId token) const {
  const double n = static_cast<double>(unit_count_);
  const double df = static_cast<double>(this->df(token));
  return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

double bm25_score(std::span<const TokenId> query, std::span<const TokenId> unit,
                  const Bm25Stats& stats) {
  const auto& [k1, b] = stats.params();
  const double norm = k1 * (1.0 - b + b * static_cast<double>(unit.size()) /
                                          stats.avgdl());
  std::set<TokenId> terms;
  for (TokenId t : query) {
    if (!is_special(t)) terms.insert(t);
  }
  double score = 0.0;
  for (TokenId t : terms) {
    const auto tf = static_cast<double>(std::count(unit.begin(), unit.end(), t));
    if (tf == 0.0) continue;
    score += stats.idf(t) * tf * (k1 + 1.0) / (tf + norm);
  }
  return score;
}

std::span<const TokenId> unit_tokens(const Passage& passage,
                                     const UnitSpan& unit) {
  if (unit.tok_end > passage.tokens.size() || unit.tok_start >= unit.tok_end) {
    throw DataError("unit span outside passage '" + passage.id + "'");
  }
  return std::span<const TokenId>(passage.tokens)
      .subspan(unit.tok_start, unit.token_count());
}

double reader_unit_score(std::span<const double> probs, const UnitSpan& unit) {
  if (unit.tok_end > probs.size() || unit.tok_start >= unit.tok_end) {
    throw DataError("reader/passage length mismatch");
  }
  auto slice = probs.subspan(unit.tok_start, unit.token_count());
  return *std::max_element(slice.begin(), slice.end());
}

std::size_t AnnotatedPair::label_index() const {
  auto it = std::find(label.begin(), label.end(), 1);
  return static_cast<std::size_t>(it - label.begin());
}

std::size_t argmax_lowest(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

AnnotatedPair annotate_pair(const Query& query, const Passage& passage,
                            const Bm25Stats& stats, double delta,
                            const ReaderDistribution* reader) {
  if (passage.units.empty()) {
    throw DataError("passage '" + passage.id + "' has no units");
  }
  if (!(delta >= 0.0)) throw UsageError("delta must be >= 0");
  AnnotatedPair pair{query.id, passage.id, passage.units, {}, {}};
  std::span<const double> probs;
  if (reader != nullptr) {
    probs = reader->probs;
    // The distribution follows the passage through truncation.
    if (probs.size() > passage.tokens.size()) {
      probs = probs.first(passage.tokens.size());
    }
  }
  pair.hybrid.reserve(passage.units.size());
  for (const auto& unit : passage.units) {
    double h = bm25_score(query.tokens, unit_tokens(passage, unit), stats);
    if (reader != nullptr) h += delta * reader_unit_score(probs, unit);
    pair.hybrid.push_back(h);
  }
  pair.label.assign(pair.hybrid.size(), 0);
  pair.label[argmax_lowest(pair.hybrid)] = 1;
  return pair;
}

ReaderTable load_reader(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  ReaderTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = path.string() + ":" + std::to_string(line_no) + ": ";
    try {
      auto obj = nlohmann::json::parse(line);
      auto key = std::make_pair(obj.at("query_id").get<std::string>(),
                                obj.at("passage_id").get<std::string>());
      auto probs = obj.at("A").get<std::vector<double>>();
      for (double a : probs) {
        if (!std::isfinite(a) || a < 0.0) {
          throw DataError(at + "reader probabilities must be finite and >= 0");
        }
      }
      if (!table.emplace(key, std::move(probs)).second) {
        throw DataError(at + "duplicate reader entry");
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(at + "malformed reader record: " + e.what());
    }
  }
  return table;
}

std::vector<AnnotatedPair> annotate_dataset(std::span<const Query> queries,
                                            std::span<const Passage> passages,
                                            const Qrels& qrels,
                                            const AnnotatorConfig& config,
                                            const ReaderTable* reader,
                                            AnnotationSummary* summary) {
  const auto query_index = index_by_id(queries);
  const auto passage_index = index_by_id(passages);

  struct Job {
    const Query* query;
    const Passage* passage;
  };
  std::vector<Job> jobs;
  std::set<std::size_t> positives;
  for (const auto& [qid, docs] : qrels.all()) {
    for (const auto& [did, rel] : docs) {
      if (rel <= 0) continue;
      auto q = query_index.find(qid);
      auto p = passage_index.find(did);
      if (q == query_index.end() || p == passage_index.end()) {
        throw DataError("pair (" + qid + ", " + did + ") references unknown " +
                        (q == query_index.end() ? "query" : "passage"));
      }
      jobs.push_back({&queries[q->second], &passages[p->second]});
      positives.insert(p->second);
    }
  }
  if (jobs.empty()) throw DataError("no positive pairs to annotate");

  std::vector<std::span<const TokenId>> units;
  for (std::size_t p : positives) {
    for (const auto& u : passages[p].units) {
      units.push_back(unit_tokens(passages[p], u));
    }
  }
  const auto stats = Bm25Stats::build(units, config.bm25);

  std::vector<AnnotatedPair> out;
  out.reserve(jobs.size());
  AnnotationSummary local;
  std::size_t unit_total = 0;
  for (const auto& job : jobs) {
    std::optional<ReaderDistribution> dist;
    if (reader != nullptr) {
      auto it = reader->find({job.query->id, job.passage->id});
      if (it != reader->end()) {
        dist = ReaderDistribution{job.query->id, job.passage->id, it->second};
      }
    }
    try {
      out.push_back(annotate_pair(*job.query, *job.passage, stats, config.delta,
                                  dist ? &*dist : nullptr));
    } catch (const DataError& e) {
      throw DataError("pair (" + job.query->id + ", " + job.passage->id +
                      "): " + e.what());
    }
    if (dist) ++local.with_reader;
    unit_total += out.back().units.size();
    ++local.label_histogram[out.back().label_index()];
  }
  local.pairs = out.size();
  local.mean_units =
      static_cast<double>(unit_total) / static_cast<double>(out.size());
  if (summary != nullptr) *summary = std::move(local);
  return out;
}

void write_annotations(const std::filesystem::path& path,
                       std::span<const AnnotatedPair> pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& pair : pairs) {
    nlohmann::json units = nlohmann::json::array();
    for (const auto& u : pair.units) units.push_back({u.tok_start, u.tok_end});
    nlohmann::json obj = {{"query_id", pair.query_id},
                          {"passage_id", pair.passage_id},
                          {"units", units},
                          {"H", pair.hybrid},
                          {"Y", pair.label}};
    out << obj.dump() << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<AnnotatedPair> read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<AnnotatedPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = path.string() + ":" + std::to_string(line_no) + ": ";
    AnnotatedPair pair;
    try {
      auto obj = nlohmann::json::parse(line);
      pair.query_id = obj.at("query_id").get<std::string>();
      pair.passage_id = obj.at("passage_id").get<std::string>();
      for (const auto& u : obj.at("units")) {
        UnitSpan span;
        span.index = pair.units.size();
        span.tok_start = u.at(0).get<std::size_t>();
        span.tok_end = u.at(1).get<std::size_t>();
        if (span.tok_start < 1 || span.tok_end <= span.tok_start) {
          throw DataError(at + "invalid unit span");
        }
        pair.units.push_back(span);
      }
      pair.hybrid = obj.at("H").get<std::vector<double>>();
      pair.label = obj.at("Y").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(at + "malformed annotation: " + e.what());
    }
    const std::size_t n = pair.units.size();
    if (n == 0 || pair.hybrid.size() != n || pair.label.size() != n) {
      throw DataError(at + "units, H and Y must have equal non-zero length");
    }
    if (std::count(pair.label.begin(), pair.label.end(), 1) != 1 ||
        std::count(pair.label.begin(), pair.label.end(), 0) !=
            static_cast<std::ptrdiff_t>(n - 1)) {
      throw DataError(at + "Y must be one-hot");
    }
    if (pair.label_index() != argmax_lowest(pair.hybrid)) {
      throw DataError(at + "Y does not mark argmax(H)");
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace unitmatch
