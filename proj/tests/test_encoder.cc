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
#include "oracles.h"
#include "unitmatch/encoder.h"
#include "unitmatch/trainer.h"

namespace unitmatch {
namespace {

EncoderParams small_params(std::uint64_t seed, std::size_t blocks = 1) {
  return init_params({12, 8, blocks, 16}, seed, {0.5, 0.3});
}

TEST_CASE("forward shape and determinism") {
  const auto p = small_params(1);
  const TokenSequence t{0, 5, 7};
  const auto z = encode(p, std::span<const TokenId>(t));
  CHECK(z.rows() == 3);
  CHECK(z.cols() == 8);
  const auto again = encode(p, std::span<const TokenId>(t));
  CHECK((z.array() == again.array()).all());
  ForwardCache cache;
  const auto cached = forward(p, t, &cache);
  CHECK((z.array() == cached.array()).all());
}

TEST_CASE("zeroed block outputs leave the residual path") {
  auto p = small_params(2, 2);
  for (auto& b : p.blocks) {
    b.wo.setZero();
    b.bo.setZero();
    b.w2.setZero();
    b.b2.setZero();
  }
  const TokenSequence t{0, 3, 4, 9};
  const auto z = encode(p, std::span<const TokenId>(t));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Vector expected = (p.token_embedding.row(t[i]) + p.position_embedding.row(i)).transpose();
    CHECK((z.row(i).transpose() - expected).norm() == 0.0);
  }
}

TEST_CASE("encode rejects bad input") {
  const auto p = small_params(3);
  CHECK_THROWS_AS(encode(p, std::span<const TokenId>(TokenSequence{0, 12})), DataError);
  CHECK_THROWS_AS(encode(p, std::span<const TokenId>(TokenSequence(17, 2))), DataError);
  CHECK_THROWS_AS(encode(p, std::span<const TokenId>(TokenSequence{})), DataError);
}

TEST_CASE("swapping two tokens changes the hidden states") {
  const auto p = small_params(4);
  const auto a = encode(p, std::span<const TokenId>(TokenSequence{0, 5, 6}));
  const auto b = encode(p, std::span<const TokenId>(TokenSequence{0, 6, 5}));
  CHECK((a - b).norm() > 1e-6);
  // The [CLS] state sees every position.
  CHECK((a.row(0) - b.row(0)).norm() > 1e-9);
}

TEST_CASE("text representation is row 0") {
  Matrix z(3, 2);
  z << 1, 2, 3, 4, 5, 6;
  CHECK(text_representation(z) == Vector{{1.0, 2.0}});
  Matrix z2 = z;
  z2.row(2) << -9, -9;
  CHECK(text_representation(z2) == text_representation(z));
}

TEST_CASE("unit embeddings are span means") {
  Matrix z(4, 2);
  z << 9, 9, 1, 0, 0, 1, 2, 2;
  UnitSpan one;
  one.tok_start = 3;
  one.tok_end = 4;
  UnitSpan two;
  two.tok_start = 1;
  two.tok_end = 3;
  const std::vector<UnitSpan> spans{one, two};
  const auto e = unit_embeddings(z, std::span<const UnitSpan>(spans));
  CHECK(e.row(0) == Eigen::RowVector2d(2, 2));
  CHECK(e.row(1) == Eigen::RowVector2d(0.5, 0.5));

  Matrix same(3, 2);
  same << 0, 0, 3, 4, 3, 4;
  UnitSpan s;
  s.tok_start = 1;
  s.tok_end = 3;
  CHECK(unit_embeddings(same, std::span<const UnitSpan>(&s, 1)).row(0) ==
        Eigen::RowVector2d(3, 4));

  UnitSpan bad;
  bad.tok_start = 2;
  bad.tok_end = 9;
  CHECK_THROWS_AS(unit_embeddings(z, std::span<const UnitSpan>(&bad, 1)), DataError);
}

TEST_CASE("matching representation") {
  const Vector zero = Vector::Zero(4);
  const Vector ones = Vector::Ones(4);
  CHECK(matching_representation(zero, ones).norm() == 0.0);
  const Vector m = matching_representation(ones, ones);
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK(m[i] == doctest::Approx(oracle::normal_cdf(1.0)).epsilon(1e-10));
    CHECK(std::abs(m[i] - 0.8413) < 1e-4);
  }
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  for (int i = 0; i < 100; ++i) {
    Vector a(16), b(16);
    for (auto& x : a) x = n01(rng);
    for (auto& x : b) x = n01(rng);
    CHECK(std::abs(a.cwiseProduct(b).sum() - a.dot(b)) < 1e-12);
  }
}

TEST_CASE("gelu derivative matches central differences") {
  for (double x : {-3.0, -1.0, -0.1, 0.0, 0.3, 1.0, 2.5}) {
    const double h = 1e-6;
    const double numeric = (gelu(x + h) - gelu(x - h)) / (2 * h);
    CHECK(gelu_grad(x) == doctest::Approx(numeric).epsilon(1e-8));
  }
}

TEST_CASE("backward matches finite differences of a scalar probe") {
  const auto p = small_params(6, 2);
  const TokenSequence t{0, 2, 3, 11, 2};
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n01;
  Matrix probe(t.size(), 8);
  for (Eigen::Index i = 0; i < probe.size(); ++i) probe.data()[i] = n01(rng);
  auto objective = [&](const EncoderParams& q) {
    return (encode(q, std::span<const TokenId>(t)).array() * probe.array()).sum();
  };
  ForwardCache cache;
  forward(p, t, &cache);
  EncoderParams grad = EncoderParams::shaped(p.config);
  accumulate(backward(p, cache, probe), grad);

  std::vector<std::pair<std::string, Matrix*>> tensors;
  EncoderParams work = p;
  work.for_each([&](const std::string& name, Matrix& m) { tensors.emplace_back(name, &m); });
  std::vector<const Matrix*> analytic;
  grad.for_each([&](const std::string&, const Matrix& m) { analytic.push_back(&m); });
  double worst = 0;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    Matrix& m = *tensors[k].second;
    if (tensors[k].first.ends_with("attn.bk")) {
      // Softmax rows are shift invariant: the exact gradient is zero.
      CHECK(analytic[k]->cwiseAbs().maxCoeff() < 1e-12);
      continue;
    }
    for (int trial = 0; trial < 4; ++trial) {
      const Eigen::Index idx = static_cast<Eigen::Index>(rng() % m.size());
      const double orig = m.data()[idx];
      m.data()[idx] = orig + 1e-5;
      const double up = objective(work);
      m.data()[idx] = orig - 1e-5;
      const double down = objective(work);
      m.data()[idx] = orig;
      const double numeric = (up - down) / 2e-5;
      const double a = analytic[k]->data()[idx];
      const double rel = relative_error(a, numeric);
      worst = std::max(worst, rel);
      CHECK_MESSAGE(rel < 1e-4, tensors[k].first);
    }
  }
  MESSAGE("max relative error " << worst);
}

TEST_CASE("every token feeds the [CLS] state") {
  const auto p = small_params(8, 1);
  const TokenSequence t{0, 4, 5, 6, 7};
  ForwardCache cache;
  forward(p, t, &cache);
  Matrix g = Matrix::Zero(t.size(), 8);
  g.row(0).setOnes();
  const auto seq = backward(p, cache, g);
  for (Eigen::Index i = 0; i < seq.token_rows.rows(); ++i) {
    CHECK(seq.token_rows.row(i).norm() > 0.0);
  }
}

TEST_CASE("float and double encoders agree") {
  const auto p = small_params(9, 2);
  const TokenSequence t{0, 2, 3, 4};
  const auto zd = encode(p, std::span<const TokenId>(t));
  const auto zf = encode(p.cast<float>(), std::span<const TokenId>(t));
  CHECK((zd - zf.cast<double>()).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("init is seeded") {
  const auto a = init_params({10, 4, 1, 8}, 3);
  const auto b = init_params({10, 4, 1, 8}, 3);
  const auto c = init_params({10, 4, 1, 8}, 4);
  CHECK(a.token_embedding == b.token_embedding);
  CHECK(a.token_embedding != c.token_embedding);
  CHECK(a.blocks[0].ln1_gain.isOnes());
  CHECK(a.blocks[0].b1.isZero());
  CHECK(a.parameter_count() > 0);
}

}  // namespace
}  // namespace unitmatch
