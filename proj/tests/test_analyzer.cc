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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "fixtures.h"
#include "unitmatch/analyzer.h"

namespace unitmatch {
namespace {

namespace fs = std::filesystem;

TEST_CASE("distribution variance") {
  CHECK(distribution_variance(Vector::Constant(4, 0.25)) == 0.0);
  CHECK(distribution_variance(Vector{{0.25, 0.75}}) == doctest::Approx(0.0625).epsilon(1e-12));
}

TEST_CASE("mean absolute cosine") {
  Matrix same(3, 2);
  same.rowwise() = Eigen::RowVector2d(1, 2);
  CHECK(mean_abs_cosine(same) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mean_abs_cosine(Matrix::Identity(3, 3)) == 0.0);
  Matrix e(2, 2);
  e << 1, 0, 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
  CHECK(mean_abs_cosine(e) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-12));
  Matrix opposite(2, 2);
  opposite << 1, 0, -1, 0;
  CHECK(mean_abs_cosine(opposite) == doctest::Approx(1.0));

  Matrix with_zero(3, 2);
  with_zero << 1, 0, 0, 0, 0, 1;
  std::size_t excluded = 0;
  CHECK(mean_abs_cosine(with_zero, &excluded) == 0.0);
  CHECK(excluded == 1);
  CHECK(std::isnan(mean_abs_cosine(Matrix::Zero(2, 2))));
}

TEST_CASE("extracted unit is the argmax of the match scores") {
  Matrix e(3, 2);
  e << 1, 0, 0, 1, 1, 1;
  CHECK(extracted_unit(Vector{{1.0, 0.0}}, e) == 0);
  CHECK(extracted_unit(Vector{{0.0, 1.0}}, e) == 1);
  CHECK(extracted_unit(Vector{{1.0, 1.0}}, e) == 2);
}

TEST_CASE("diagnostics on trained-free models") {
  const auto f = testing::make_fixture(12, 1);
  const auto params = init_params(testing::fixture_encoder(f, 8, 1), 1, {1.0, 0.3});
  const auto pairs = f.data.pairs();

  const double v = unit_balance_variance(params, pairs);
  CHECK(v >= 0.0);
  CHECK(v <= 0.25);
  const double acc = emu_accuracy(params, pairs);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);

  // Pure functions: repeated evaluation is identical, any thread count.
  CHECK(unit_balance_variance(params, pairs, 3) == v);
  CHECK(emu_accuracy(params, pairs, 2) == acc);
  const auto r1 = analyze(params, pairs, 10000, 7);
  const auto r2 = analyze(params, pairs, 10000, 7);
  CHECK(r1.to_json() == r2.to_json());
  CHECK(r1.samples == pairs.size());
  CHECK(analyze(params, pairs, 5, 7).samples == 5);

  // Permuting units inside a passage leaves the balance variance alone.
  std::vector<Passage> reversed(f.data.passages().begin(), f.data.passages().end());
  std::vector<TrainingPair> permuted;
  for (const auto& p : pairs) {
    const auto idx = static_cast<std::size_t>(p.positive - f.data.passages().data());
    std::reverse(reversed[idx].units.begin(), reversed[idx].units.end());
  }
  for (const auto& p : pairs) {
    const auto idx = static_cast<std::size_t>(p.positive - f.data.passages().data());
    TrainingPair q = p;
    q.positive = &reversed[idx];
    q.label = reversed[idx].units.size() - 1 - p.label;
    permuted.push_back(q);
  }
  CHECK(unit_balance_variance(params, permuted) == doctest::Approx(v).epsilon(1e-12));
  CHECK(emu_accuracy(params, permuted) == acc);

  CHECK_THROWS(emu_accuracy(params, {}));
}

TEST_CASE("emu accuracy is 1 when every passage has one unit") {
  const std::vector<Document> corpus{{"d1", "one two"}, {"d2", "three four"}};
  const std::vector<Document> queries{{"q1", "one"}, {"q2", "four"}};
  const auto vocab = Vocabulary::build(texts_of(corpus));
  std::vector<Passage> passages;
  for (const auto& d : corpus) passages.push_back(make_passage(d, vocab));
  std::vector<Query> qs;
  for (const auto& d : queries) qs.push_back(make_query(d, vocab));
  Qrels qrels;
  qrels.set("q1", "d1", 1);
  qrels.set("q2", "d2", 1);
  const auto data = build_training_data(corpus, queries, annotate_dataset(qs, passages, qrels, {}));
  const auto params = init_params({vocab.size(), 4, 1, kDefaultMaxLen}, 1);
  CHECK(emu_accuracy(params, data.pairs()) == 1.0);
}

TEST_CASE("untrained accuracy is near chance") {
  double total = 0;
  int runs = 0;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const auto f = testing::make_fixture(40, seed);
    const auto params = init_params(testing::fixture_encoder(f, 8, 1), seed, {1.0, 0.3});
    total += emu_accuracy(params, f.data.pairs());
    ++runs;
  }
  CHECK(std::abs(total / runs - 0.25) < 0.1);
}

TEST_CASE("embedding export") {
  const auto f = testing::make_fixture(10, 2);
  const auto params = init_params(testing::fixture_encoder(f, 4, 1), 2);
  const auto passages = f.data.passages();
  const std::vector<ExportSource> sources{{"a", passages, f.data.pairs()},
                                          {"b", passages, f.data.pairs()}};
  const fs::path path = fs::temp_directory_path() / "unitmatch_export_test.tsv";
  export_embeddings(path, params, sources, {EmbeddingKind::kText});
  std::ifstream in(path);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) rows += !line.empty();
  CHECK(rows == 20);

  std::stringstream first;
  first << std::ifstream(path).rdbuf();
  export_embeddings(path, params, sources, {EmbeddingKind::kText});
  std::stringstream second;
  second << std::ifstream(path).rdbuf();
  CHECK(first.str() == second.str());

  const std::vector<ExportSource> no_pairs{{"a", passages, {}}};
  CHECK_THROWS(export_embeddings(path, params, no_pairs, {EmbeddingKind::kMatching}));
  CHECK(parse_embedding_kind("unit") == EmbeddingKind::kUnit);
  CHECK_THROWS(parse_embedding_kind("tsne"));
}

}  // namespace
}  // namespace unitmatch
