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

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "unitmatch/corpus.h"

namespace unitmatch {

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Matrix = MatrixT<double>;
using Vector = VectorT<double>;

struct EncoderConfig {
  std::size_t vocab_size = 2;
  std::size_t dim = 64;
  std::size_t blocks = 2;
  std::size_t max_len = kDefaultMaxLen;

  bool operator==(const EncoderConfig&) const = default;
};

// One pre-norm transformer block. Row vectors are 1 x v (or 1 x 4v).
template <typename Scalar>
struct BlockWeights {
  MatrixT<Scalar> ln1_gain, ln1_bias;
  MatrixT<Scalar> wq, bq, wk, bk, wv, bv, wo, bo;
  MatrixT<Scalar> ln2_gain, ln2_bias;
  MatrixT<Scalar> w1, b1, w2, b2;

  template <typename F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + "ln1.gain", ln1_gain);
    f(prefix + "ln1.bias", ln1_bias);
    f(prefix + "attn.wq", wq);
    f(prefix + "attn.bq", bq);
    f(prefix + "attn.wk", wk);
    f(prefix + "attn.bk", bk);
    f(prefix + "attn.wv", wv);
    f(prefix + "attn.bv", bv);
    f(prefix + "attn.wo", wo);
    f(prefix + "attn.bo", bo);
    f(prefix + "ln2.gain", ln2_gain);
    f(prefix + "ln2.bias", ln2_bias);
    f(prefix + "ff.w1", w1);
    f(prefix + "ff.b1", b1);
    f(prefix + "ff.w2", w2);
    f(prefix + "ff.b2", b2);
  }
  template <typename F>
  void for_each(const std::string& prefix, F&& f) const {
    const_cast<BlockWeights*>(this)->for_each(
        prefix, [&](const std::string& name, const MatrixT<Scalar>& m) { f(name, m); });
  }
};

// All trainable tensors of the shared query/passage encoder.
template <typename Scalar>
struct BasicEncoderParams {
  EncoderConfig config;
  MatrixT<Scalar> token_embedding;     // vocab x v
  MatrixT<Scalar> position_embedding;  // max_len x v
  std::vector<BlockWeights<Scalar>> blocks;

  // Visits every tensor in a fixed order with a stable name.
  template <typename F>
  void for_each(F&& f) {
    f(std::string("embed.token"), token_embedding);
    f(std::string("embed.position"), position_embedding);
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      blocks[k].for_each("block" + std::to_string(k) + ".", f);
    }
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<BasicEncoderParams*>(this)->for_each(
        [&](const std::string& name, const MatrixT<Scalar>& m) { f(name, m); });
  }

  template <typename Other>
  BasicEncoderParams<Other> cast() const {
    BasicEncoderParams<Other> out = BasicEncoderParams<Other>::shaped(config);
    std::vector<const MatrixT<Scalar>*> src;
    for_each([&](const std::string&, const MatrixT<Scalar>& m) { src.push_back(&m); });
    std::size_t i = 0;
    out.for_each([&](const std::string&, MatrixT<Other>& m) {
      m = src[i++]->template cast<Other>();
    });
    return out;
  }

  // Zero tensors of the right shapes.
  static BasicEncoderParams shaped(const EncoderConfig& config);

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const MatrixT<Scalar>& m) { n += m.size(); });
    return n;
  }
};

using EncoderParams = BasicEncoderParams<double>;

struct InitOptions {
  double embedding_std = 0.02;
  double weight_std = 0.02;
};

// Gaussian embeddings and projections, zero biases, unit layer-norm gains.
EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed,
                          const InitOptions& init = {});

// Throws DataError on a shape mismatch or a non-finite entry.
void check_params(const EncoderParams& params);

double gelu(double x);
double gelu_grad(double x);

// Intermediate values of one block, kept for the backward pass.
struct BlockCache {
  Matrix input;
  Matrix ln1_hat;
  Vector ln1_rstd;
  Matrix ln1_out;
  Matrix q, k, v, attn, context;
  Matrix mid;
  Matrix ln2_hat;
  Vector ln2_rstd;
  Matrix ln2_out;
  Matrix pre_act, act;
};

struct ForwardCache {
  TokenSequence tokens;
  std::vector<BlockCache> blocks;
};

// Hidden states Z (L x v) for a token sequence. Throws DataError for an
// out-of-range token id or a sequence longer than max_len.
template <typename Scalar>
MatrixT<Scalar> encode(const BasicEncoderParams<Scalar>& params,
                       std::span<const TokenId> tokens);

// Same as encode<double>, recording what backward() needs.
Matrix forward(const EncoderParams& params, std::span<const TokenId> tokens,
               ForwardCache* cache);

// Parameter gradient of one sequence. Token and position gradients are kept
// as L x v rows and scattered by accumulate().
struct SequenceGradient {
  TokenSequence tokens;
  Matrix token_rows;
  Matrix position_rows;
  std::vector<BlockWeights<double>> blocks;
};

// Back-propagates dL/dZ through the encoder.
SequenceGradient backward(const EncoderParams& params, const ForwardCache& cache,
                          const Matrix& grad_hidden);

// grad += seq (token rows scattered onto their ids).
void accumulate(const SequenceGradient& seq, EncoderParams& grad);

// Row 0 of Z, the [CLS] state.
template <typename Scalar>
VectorT<Scalar> text_representation(const MatrixT<Scalar>& hidden) {
  return hidden.row(0).transpose();
}

// e_i = mean of Z rows in [tok_start, tok_end). Throws DataError on an
// empty or out-of-range span.
template <typename Scalar>
MatrixT<Scalar> unit_embeddings(const MatrixT<Scalar>& hidden,
                                std::span<const UnitSpan> units);

// GELU(t_q * t_p), componentwise, with the exact Gaussian CDF.
template <typename Scalar>
VectorT<Scalar> matching_representation(const VectorT<Scalar>& query,
                                        const VectorT<Scalar>& passage);

}  // namespace unitmatch
