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
#include <random>

#include "doctest.h"
#include "fixtures.h"
#include "unitmatch/objective.h"

namespace unitmatch {
namespace {

Matrix units_with_logits(const std::vector<double>& logits) {
  // rep = e_0, so row i dotted with rep gives logits[i].
  Matrix e = Matrix::Zero(static_cast<Eigen::Index>(logits.size()), 2);
  for (std::size_t i = 0; i < logits.size(); ++i) e(static_cast<Eigen::Index>(i), 0) = logits[i];
  return e;
}

const Vector kRep = Vector::Unit(2, 0);

TEST_CASE("balance loss") {
  Matrix same(3, 4);
  same.rowwise() = Eigen::RowVector4d(0.3, -1, 2, 0.5);
  CHECK(balance_loss(Vector::Ones(4), same) == doctest::Approx(0.0).epsilon(1e-12));
  const double l = balance_loss(kRep, units_with_logits({0.0, std::log(3.0)}));
  CHECK(l == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)).epsilon(1e-12));
  CHECK(std::abs(l - 0.1438) < 1e-4);
  CHECK(balance_loss(kRep, units_with_logits({7.0})) == 0.0);
  CHECK(balance_loss(kRep, units_with_logits({1.0, 2.0, -1.0})) > 0.0);
}

TEST_CASE("extract loss") {
  const std::vector<int> single{1};
  CHECK(extract_loss(kRep, units_with_logits({4.0}), single) == 0.0);
  const std::vector<int> y{0, 1};
  const double l = extract_loss(kRep, units_with_logits({0.0, std::log(3.0)}), y);
  CHECK(l == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
  CHECK(std::abs(l - 0.2877) < 1e-4);
  const double shifted = extract_loss(kRep, units_with_logits({5.0, 5.0 + std::log(3.0)}), y);
  CHECK(std::abs(shifted - l) < 1e-9);
}

TEST_CASE("contrastive loss") {
  const Vector q = Vector::Unit(2, 0);
  const Vector p = Vector::Unit(2, 0);
  Matrix one(1, 2);
  one << 1, 5;
  CHECK(contrastive_loss(q, p, one) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  Matrix two(2, 2);
  two << 1, 0, 1, 3;
  CHECK(contrastive_loss(q, p, two) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(std::abs(contrastive_loss(q, p, two) - 1.0986) < 1e-4);
  CHECK(contrastive_loss(q * 1000.0, p, two * 0.0) < 1e-12);
}

TEST_CASE("total loss") {
  const auto t = total_loss(0.6931, 0.2877, 0.1438, 0.1, 1.0);
  CHECK(std::abs(t.total - 0.8657) < 1e-4);
  CHECK(t.total == 0.6931 + 0.1 * 0.2877 + 1.0 * 0.1438);
  CHECK(total_loss(0.6931, 0.2877, 0.1438, 0, 0).total == 0.6931);
  CHECK(total_loss(0.5, 0, 0, 3, 7).total == 0.5);
  CHECK_THROWS(total_loss(1, 1, 1, -0.1, 1));
}

TEST_CASE("extract gradient wrt logits is probs minus Y") {
  const Matrix e = units_with_logits({0.2, -1.0, 0.7});
  const auto g = extract_loss_grad(kRep, e, 1);
  const Vector p = softmax(Vector{{0.2, -1.0, 0.7}});
  Vector expected = p;
  expected[1] -= 1;
  CHECK((g.d_logits - expected).norm() < 1e-15);
  // And numerically.
  for (Eigen::Index i = 0; i < 3; ++i) {
    std::vector<double> up{0.2, -1.0, 0.7}, down = up;
    up[static_cast<std::size_t>(i)] += 1e-6;
    down[static_cast<std::size_t>(i)] -= 1e-6;
    const std::vector<int> y{0, 1, 0};
    const double numeric =
        (extract_loss(kRep, units_with_logits(up), y) -
         extract_loss(kRep, units_with_logits(down), y)) / 2e-6;
    CHECK(g.d_logits[i] == doctest::Approx(numeric).epsilon(1e-7));
  }
}

TEST_CASE("loss gradients match central differences") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  auto rnd = [&](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
    return m;
  };
  const Vector t = rnd(5, 1);
  const Vector q = rnd(5, 1);
  const Matrix e = rnd(3, 5);
  const Matrix neg = rnd(4, 5);
  const auto b = balance_loss_grad(t, e);
  const auto x = extract_loss_grad(q, e, 2);
  const auto c = contrastive_loss_grad(q, t, neg);
  const std::vector<int> y{0, 0, 1};
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < 5; ++i) {
    Vector tu = t, td = t;
    tu[i] += h;
    td[i] -= h;
    CHECK(b.d_passage[i] == doctest::Approx((balance_loss(tu, e) - balance_loss(td, e)) / (2 * h)).epsilon(1e-6));
    CHECK(c.d_positive[i] == doctest::Approx((contrastive_loss(q, tu, neg) - contrastive_loss(q, td, neg)) / (2 * h)).epsilon(1e-6));
    Vector qu = q, qd = q;
    qu[i] += h;
    qd[i] -= h;
    CHECK(x.d_match[i] == doctest::Approx((extract_loss(qu, e, y) - extract_loss(qd, e, y)) / (2 * h)).epsilon(1e-6));
    CHECK(c.d_query[i] == doctest::Approx((contrastive_loss(qu, t, neg) - contrastive_loss(qd, t, neg)) / (2 * h)).epsilon(1e-6));
  }
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    Matrix eu = e, ed = e;
    eu.data()[i] += h;
    ed.data()[i] -= h;
    CHECK(b.d_units.data()[i] == doctest::Approx((balance_loss(t, eu) - balance_loss(t, ed)) / (2 * h)).epsilon(1e-6));
    CHECK(x.d_units.data()[i] == doctest::Approx((extract_loss(q, eu, y) - extract_loss(q, ed, y)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("negative modes parse") {
  CHECK(parse_negative_mode("in-batch") == NegativeMode::kInBatch);
  CHECK(parse_negative_mode("single") == NegativeMode::kSingle);
  CHECK(parse_negative_mode("file") == NegativeMode::kFile);
  CHECK(to_string(NegativeMode::kSingle) == "single");
  CHECK_THROWS(parse_negative_mode("hard"));
}

TEST_CASE("batch gradients: zero weights reduce to the contrastive term") {
  const auto f = testing::make_fixture(4, 1);
  const auto params = init_params(testing::fixture_encoder(f), 2, {0.5, 0.3});
  const auto full = gradients(params, f.data.pairs(), 0.0, 0.0);
  const auto only = evaluate_batch(params, f.data.pairs(), {1.0, 0.0, 0.0}, {}, true);
  CHECK(full.loss.total == full.loss.l_c);
  CHECK(full.loss.l_extract > 0.0);
  CHECK(full.loss.l_balance >= 0.0);
  std::vector<const Matrix*> a, b;
  full.grad.for_each([&](const std::string&, const Matrix& m) { a.push_back(&m); });
  only.grad.for_each([&](const std::string&, const Matrix& m) { b.push_back(&m); });
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);

  const auto weighted = gradients(params, f.data.pairs(), 0.1, 1.0);
  CHECK(weighted.loss.total ==
        weighted.loss.l_c + 0.1 * weighted.loss.l_extract + 1.0 * weighted.loss.l_balance);
}

TEST_CASE("batch results do not depend on the thread count") {
  const auto f = testing::make_fixture(6, 2);
  const auto params = init_params(testing::fixture_encoder(f), 3, {0.5, 0.3});
  const auto one = gradients(params, f.data.pairs(), 0.1, 1.0, {NegativeMode::kInBatch, 1});
  const auto three = gradients(params, f.data.pairs(), 0.1, 1.0, {NegativeMode::kInBatch, 3});
  CHECK(one.loss.total == three.loss.total);
  std::vector<const Matrix*> a, b;
  one.grad.for_each([&](const std::string&, const Matrix& m) { a.push_back(&m); });
  three.grad.for_each([&](const std::string&, const Matrix& m) { b.push_back(&m); });
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
}

TEST_CASE("single-unit passages add nothing to the auxiliary terms") {
  const std::vector<Document> corpus{{"d1", "red apple pie"}, {"d2", "blue sky high"},
                                     {"d3", "green grass grows"}};
  const std::vector<Document> queries{{"q1", "apple pie"}, {"q2", "blue sky"}, {"q3", "grass"}};
  const auto vocab = Vocabulary::build(texts_of(corpus));
  std::vector<Passage> passages;
  for (const auto& d : corpus) passages.push_back(make_passage(d, vocab));
  std::vector<Query> qs;
  for (const auto& d : queries) qs.push_back(make_query(d, vocab));
  Qrels qrels;
  qrels.set("q1", "d1", 1);
  qrels.set("q2", "d2", 1);
  qrels.set("q3", "d3", 1);
  const auto ann = annotate_dataset(qs, passages, qrels, {});
  const auto data = build_training_data(corpus, queries, ann);
  const auto params = init_params({vocab.size(), 8, 1, kDefaultMaxLen}, 1, {0.5, 0.3});
  const auto r = gradients(params, data.pairs(), 0.1, 1.0);
  CHECK(r.loss.l_extract == 0.0);
  CHECK(r.loss.l_balance == 0.0);
  CHECK(r.loss.l_c > 0.0);
}

}  // namespace
}  // namespace unitmatch
