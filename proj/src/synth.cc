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

#include "unitmatch/synth.h"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "unitmatch/error.h"
#include "unitmatch/random.h"

namespace unitmatch {

namespace {

// Pronounceable, collision-free pseudo-words: a prefix plus base-20
// consonant/vowel syllables of the index.
std::string make_word(const char* prefix, std::size_t index) {
  static constexpr char kConsonants[] = "bdfgklmnprstvz";
  static constexpr char kVowels[] = "aeiou";
  std::string word = prefix;
  do {
    const std::size_t digit = index % 70;
    word += kConsonants[digit / 5];
    word += kVowels[digit % 5];
    index /= 70;
  } while (index > 0);
  return word;
}

std::string sentence(std::vector<std::string> words, char terminal) {
  std::string text;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) text += ' ';
    text += words[i];
  }
  if (!text.empty()) text[0] = static_cast<char>(text[0] - 'a' + 'A');
  text += terminal;
  return text;
}

std::vector<std::string> draw_distinct(const std::vector<std::string>& pool,
                                       std::size_t count, SplitMix64& rng) {
  std::vector<std::size_t> picked;
  while (picked.size() < count) {
    const auto i = static_cast<std::size_t>(rng.uniform(pool.size()));
    if (std::find(picked.begin(), picked.end(), i) == picked.end()) picked.push_back(i);
  }
  std::vector<std::string> words;
  for (auto i : picked) words.push_back(pool[i]);
  return words;
}

}  // namespace

void SynthSpec::validate() const {
  if (queries < 1) throw UsageError("synth needs at least one query");
  if (distractors < 1) throw UsageError("synth needs at least one distractor sentence");
  if (heldout > queries) throw UsageError("heldout exceeds the number of queries");
  if (words_per_query < 1 || words_per_sentence < words_per_query) {
    throw UsageError("words_per_sentence must be >= words_per_query >= 1");
  }
  if (signal_vocab < queries * words_per_query) {
    throw UsageError("vocabulary too small: signal_vocab must be >= queries * words_per_query (" +
                     std::to_string(queries * words_per_query) + ")");
  }
  if (distractor_vocab < words_per_sentence) {
    throw UsageError("vocabulary too small: distractor_vocab must be >= words_per_sentence");
  }
}

SynthDataset synthesize(const SynthSpec& spec) {
  spec.validate();
  SplitMix64 rng(spec.seed);
  std::vector<std::string> signal(spec.signal_vocab), noise(spec.distractor_vocab);
  for (std::size_t i = 0; i < signal.size(); ++i) signal[i] = make_word("s", i);
  for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = make_word("n", i);
  rng.shuffle(signal);

  SynthDataset data;
  const std::size_t sentences = spec.distractors + 1;
  const std::size_t fillers = spec.words_per_sentence - spec.words_per_query;
  for (std::size_t q = 0; q < spec.queries; ++q) {
    const std::string qid = "q" + std::to_string(q);
    const std::string pid = "d" + std::to_string(q);
    std::vector<std::string> own(signal.begin() + static_cast<std::ptrdiff_t>(q * spec.words_per_query),
                                 signal.begin() + static_cast<std::ptrdiff_t>((q + 1) * spec.words_per_query));
    const auto gold = static_cast<std::size_t>(rng.uniform(sentences));
    std::string text;
    for (std::size_t s = 0; s < sentences; ++s) {
      std::vector<std::string> words;
      if (s == gold) {
        words = own;
        auto filler = draw_distinct(noise, fillers, rng);
        words.insert(words.end(), filler.begin(), filler.end());
      } else {
        words = draw_distinct(noise, spec.words_per_sentence, rng);
      }
      rng.shuffle(words);
      if (!text.empty()) text += ' ';
      text += sentence(std::move(words), '.');
    }
    std::vector<std::string> query_words = own;
    rng.shuffle(query_words);

    data.corpus.push_back({pid, text});
    data.queries.push_back({qid, sentence(std::move(query_words), '?')});
    auto& qrels = q + spec.heldout < spec.queries ? data.train_qrels : data.test_qrels;
    qrels.set(qid, pid, 1);
    data.gold.push_back({qid, pid, gold});
  }
  return data;
}

void write_qrels(const std::filesystem::path& path, const Qrels& qrels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "query-id\tcorpus-id\tscore\n";
  for (const auto& [qid, docs] : qrels.all()) {
    for (const auto& [did, rel] : docs) out << qid << '\t' << did << '\t' << rel << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

void write_dataset(const std::filesystem::path& dir, const SynthDataset& data) {
  std::filesystem::create_directories(dir / "qrels");
  auto write_jsonl = [](const std::filesystem::path& path, const std::vector<Document>& docs) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& d : docs) out << nlohmann::json{{"_id", d.id}, {"text", d.text}}.dump() << '\n';
    if (!out) throw DataError("write failed: " + path.string());
  };
  write_jsonl(dir / "corpus.jsonl", data.corpus);
  write_jsonl(dir / "queries.jsonl", data.queries);
  write_qrels(dir / "qrels" / "train.tsv", data.train_qrels);
  write_qrels(dir / "qrels" / "test.tsv", data.test_qrels);
  std::ofstream gold(dir / "gold.tsv", std::ios::binary | std::ios::trunc);
  if (!gold) throw DataError("cannot write gold labels");
  gold << "query-id\tcorpus-id\tunit\n";
  for (const auto& g : data.gold) gold << g.query_id << '\t' << g.passage_id << '\t' << g.unit << '\n';
}

std::vector<GoldLabel> load_gold(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<GoldLabel> gold;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("query-id", 0) == 0) continue;
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed gold line");
    }
    try {
      gold.push_back({line.substr(0, a), line.substr(a + 1, b - a - 1),
                      static_cast<std::size_t>(std::stoul(line.substr(b + 1)))});
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed gold line");
    }
  }
  return gold;
}

}  // namespace unitmatch
