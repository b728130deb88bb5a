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

#include "unitmatch/evaluator.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "unitmatch/error.h"
#include "unitmatch/objective.h"

namespace unitmatch {

namespace {

bool ranks_before(const ScoredPassage& a, const ScoredPassage& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, end);
}

std::set<std::string> word_set(std::span<const std::string> texts) {
  std::set<std::string> words;
  for (const auto& t : texts) {
    for (auto& w : split_words(t)) words.insert(std::move(w.text));
  }
  return words;
}

bool has_relevant(const std::map<std::string, int>& judged) {
  return std::any_of(judged.begin(), judged.end(),
                     [](const auto& kv) { return kv.second > 0; });
}

}  // namespace

Precision parse_precision(const std::string& name) {
  if (name == "f64") return Precision::kF64;
  if (name == "f32") return Precision::kF32;
  throw UsageError("precision must be f32 or f64");
}

EncodedTexts encode_texts(const EncoderParams& params, const Vocabulary& vocab,
                          std::span<const Document> docs,
                          const EncodeOptions& options) {
  if (vocab.size() != params.config.vocab_size) throw DataError("vocabulary mismatch");
  if (options.max_len > params.config.max_len) {
    throw DataError("max_len " + std::to_string(options.max_len) +
                    " exceeds the encoder's " + std::to_string(params.config.max_len));
  }
  EncodedTexts out;
  out.ids.reserve(docs.size());
  for (const auto& d : docs) out.ids.push_back(d.id);
  out.vectors.resize(static_cast<Eigen::Index>(docs.size()),
                     static_cast<Eigen::Index>(params.config.dim));
  std::vector<Vector> rows(docs.size());
  if (options.precision == Precision::kF32) {
    const auto narrow = params.cast<float>();
    parallel_for(docs.size(), options.threads, [&](std::size_t i) {
      const auto tokens = tokenize(docs[i].text, vocab, options.max_len);
      rows[i] = text_representation(encode(narrow, tokens)).cast<double>();
    });
  } else {
    parallel_for(docs.size(), options.threads, [&](std::size_t i) {
      const auto tokens = tokenize(docs[i].text, vocab, options.max_len);
      rows[i] = text_representation(encode(params, tokens));
    });
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.vectors.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return out;
}

RankedList retrieve(const Vector& query, const EncodedTexts& corpus, std::size_t k) {
  if (corpus.ids.empty()) throw DataError("cannot retrieve from an empty corpus");
  if (k == 0) throw UsageError("k must be >= 1");
  if (query.size() != corpus.vectors.cols()) throw DataError("query dimension mismatch");
  const Vector scores = corpus.vectors * query;
  RankedList all(corpus.ids.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    all[i] = {corpus.ids[i], scores(static_cast<Eigen::Index>(i))};
  }
  const std::size_t top = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(top), all.end(),
                    ranks_before);
  all.resize(top);
  return all;
}

RetrievalRun retrieve_all(const EncodedTexts& queries, const EncodedTexts& corpus,
                          std::size_t k, std::size_t threads) {
  std::vector<RankedList> lists(queries.ids.size());
  parallel_for(lists.size(), threads, [&](std::size_t i) {
    lists[i] = retrieve(queries.vectors.row(static_cast<Eigen::Index>(i)).transpose(),
                        corpus, k);
  });
  RetrievalRun run;
  for (std::size_t i = 0; i < lists.size(); ++i) run[queries.ids[i]] = std::move(lists[i]);
  return run;
}

void write_run(const std::filesystem::path& path, const RetrievalRun& run) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& [qid, list] : run) {
    for (std::size_t r = 0; r < list.size(); ++r) {
      out << qid << '\t' << list[r].id << '\t' << (r + 1) << '\t'
          << format_double(list[r].score) << '\n';
    }
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::map<std::string, double> ndcg_per_query(const RetrievalRun& run,
                                             const Qrels& qrels, std::size_t k) {
  std::map<std::string, double> scores;
  for (const auto& [qid, list] : run) {
    const auto& judged = qrels.judgments(qid);
    if (!has_relevant(judged)) continue;
    double dcg = 0.0;
    for (std::size_t i = 0; i < list.size() && i < k; ++i) {
      auto it = judged.find(list[i].id);
      const int rel = it == judged.end() ? 0 : it->second;
      dcg += (std::exp2(rel) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    }
    std::vector<int> ideal;
    for (const auto& [doc, rel] : judged) ideal.push_back(rel);
    std::sort(ideal.rbegin(), ideal.rend());
    double idcg = 0.0;
    for (std::size_t i = 0; i < ideal.size() && i < k; ++i) {
      idcg += (std::exp2(ideal[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    }
    scores[qid] = dcg / idcg;
  }
  return scores;
}

double ndcg_at_k(const RetrievalRun& run, const Qrels& qrels, std::size_t k) {
  const auto per_query = ndcg_per_query(run, qrels, k);
  if (per_query.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [qid, v] : per_query) sum += v;
  return sum / static_cast<double>(per_query.size());
}

double top_k_hit(const RetrievalRun& run, const Qrels& qrels, std::size_t k) {
  std::size_t judged = 0, hits = 0;
  for (const auto& [qid, list] : run) {
    const auto& rels = qrels.judgments(qid);
    if (!has_relevant(rels)) continue;
    ++judged;
    for (std::size_t i = 0; i < list.size() && i < k; ++i) {
      auto it = rels.find(list[i].id);
      if (it != rels.end() && it->second > 0) {
        ++hits;
        break;
      }
    }
  }
  return judged == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(judged);
}

std::size_t judged_query_count(const RetrievalRun& run, const Qrels& qrels) {
  std::size_t n = 0;
  for (const auto& [qid, list] : run) n += has_relevant(qrels.judgments(qid)) ? 1 : 0;
  return n;
}

double jaccard_unigrams(std::span<const std::string> corpus_a,
                        std::span<const std::string> corpus_b) {
  const auto a = word_set(corpus_a);
  const auto b = word_set(corpus_b);
  std::size_t shared = 0;
  for (const auto& w : a) shared += b.contains(w) ? 1 : 0;
  const std::size_t joint = a.size() + b.size() - shared;
  return joint == 0 ? 0.0 : 100.0 * static_cast<double>(shared) / static_cast<double>(joint);
}

double MetricsReport::mean_ndcg() const {
  if (datasets.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [name, m] : datasets) sum += m.ndcg;
  return sum / static_cast<double>(datasets.size());
}

double MetricsReport::mean_top_k() const {
  if (datasets.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [name, m] : datasets) sum += m.top_k;
  return sum / static_cast<double>(datasets.size());
}

nlohmann::json MetricsReport::to_json() const {
  const std::string ndcg_key = "ndcg@" + std::to_string(ndcg_cutoff);
  const std::string hit_key = "top@" + std::to_string(hit_cutoff);
  nlohmann::json j;
  j["datasets"] = nlohmann::json::object();
  for (const auto& [name, m] : datasets) {
    j["datasets"][name] = {{ndcg_key, m.ndcg}, {hit_key, m.top_k}, {"queries", m.queries}};
  }
  j["mean"] = {{ndcg_key, mean_ndcg()}, {hit_key, mean_top_k()}};
  j["config"] = config;
  return j;
}

}  // namespace unitmatch
