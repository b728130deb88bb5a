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

#include "unitmatch/encoder.h"

#include <cmath>
#include <random>
#include <type_traits>

#include "unitmatch/error.h"

namespace unitmatch {

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename S>
struct LayerNormOut {
  MatrixT<S> hat;
  VectorT<S> rstd;
  MatrixT<S> out;
};

template <typename S>
LayerNormOut<S> layer_norm(const MatrixT<S>& x, const MatrixT<S>& gain,
                           const MatrixT<S>& bias) {
  const auto cols = static_cast<S>(x.cols());
  LayerNormOut<S> r;
  r.hat.resize(x.rows(), x.cols());
  r.rstd.resize(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const S mean = x.row(i).sum() / cols;
    auto centered = (x.row(i).array() - mean).matrix();
    const S var = centered.squaredNorm() / cols;
    const S rstd = S(1) / std::sqrt(var + static_cast<S>(kLayerNormEps));
    r.rstd(i) = rstd;
    r.hat.row(i) = centered * rstd;
  }
  r.out = (r.hat.array().rowwise() * gain.row(0).array()).matrix();
  r.out.rowwise() += bias.row(0);
  return r;
}

// dx for y = hat * gain + bias, accumulating gain/bias gradients.
Matrix layer_norm_backward(const Matrix& grad_out, const Matrix& hat,
                           const Vector& rstd, const Matrix& gain,
                           Matrix& grad_gain, Matrix& grad_bias) {
  grad_gain += (grad_out.array() * hat.array()).colwise().sum().matrix();
  grad_bias += grad_out.colwise().sum();
  const Matrix grad_hat =
      (grad_out.array().rowwise() * gain.row(0).array()).matrix();
  const auto cols = static_cast<double>(hat.cols());
  Matrix grad_in(hat.rows(), hat.cols());
  for (Eigen::Index i = 0; i < hat.rows(); ++i) {
    const double mean_g = grad_hat.row(i).sum() / cols;
    const double mean_gh = grad_hat.row(i).dot(hat.row(i)) / cols;
    grad_in.row(i) =
        rstd(i) * (grad_hat.row(i).array() - mean_g - hat.row(i).array() * mean_gh)
                      .matrix();
  }
  return grad_in;
}

template <typename S>
S gelu_t(S x) {
  return S(0.5) * x * (S(1) + std::erf(x / std::sqrt(S(2))));
}

template <typename S>
MatrixT<S> softmax_rows(const MatrixT<S>& scores) {
  MatrixT<S> p(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const S top = scores.row(i).maxCoeff();
    p.row(i) = (scores.row(i).array() - top).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

template <typename S>
MatrixT<S> affine(const MatrixT<S>& x, const MatrixT<S>& w, const MatrixT<S>& b) {
  MatrixT<S> y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

template <typename S>
MatrixT<S> run(const BasicEncoderParams<S>& params, std::span<const TokenId> tokens,
               std::vector<BlockCache>* caches) {
  const auto& cfg = params.config;
  if (tokens.empty()) throw DataError("cannot encode an empty token sequence");
  if (tokens.size() > cfg.max_len) {
    throw DataError("sequence of length " + std::to_string(tokens.size()) +
                    " exceeds max_len " + std::to_string(cfg.max_len));
  }
  const auto len = static_cast<Eigen::Index>(tokens.size());
  const auto dim = static_cast<Eigen::Index>(cfg.dim);
  MatrixT<S> x(len, dim);
  for (Eigen::Index i = 0; i < len; ++i) {
    const TokenId t = tokens[static_cast<std::size_t>(i)];
    if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab_size) {
      throw DataError("token id " + std::to_string(t) + " outside vocabulary of " +
                      std::to_string(cfg.vocab_size));
    }
    x.row(i) = params.token_embedding.row(t) + params.position_embedding.row(i);
  }
  const S scale = S(1) / std::sqrt(static_cast<S>(cfg.dim));
  if (caches) caches->assign(params.blocks.size(), {});

  for (std::size_t k = 0; k < params.blocks.size(); ++k) {
    const auto& w = params.blocks[k];
    auto ln1 = layer_norm<S>(x, w.ln1_gain, w.ln1_bias);
    MatrixT<S> q = affine<S>(ln1.out, w.wq, w.bq);
    MatrixT<S> kk = affine<S>(ln1.out, w.wk, w.bk);
    MatrixT<S> v = affine<S>(ln1.out, w.wv, w.bv);
    MatrixT<S> attn = softmax_rows<S>((q * kk.transpose()) * scale);
    MatrixT<S> context = attn * v;
    MatrixT<S> mid = x + affine<S>(context, w.wo, w.bo);
    auto ln2 = layer_norm<S>(mid, w.ln2_gain, w.ln2_bias);
    MatrixT<S> pre = affine<S>(ln2.out, w.w1, w.b1);
    MatrixT<S> act = pre.unaryExpr([](S z) { return gelu_t(z); });
    MatrixT<S> out = mid + affine<S>(act, w.w2, w.b2);

    if constexpr (std::is_same_v<S, double>) {
      if (caches) {
        auto& c = (*caches)[k];
        c.input = std::move(x);
        c.ln1_hat = std::move(ln1.hat);
        c.ln1_rstd = std::move(ln1.rstd);
        c.ln1_out = std::move(ln1.out);
        c.q = std::move(q);
        c.k = std::move(kk);
        c.v = std::move(v);
        c.attn = std::move(attn);
        c.context = std::move(context);
        c.mid = std::move(mid);
        c.ln2_hat = std::move(ln2.hat);
        c.ln2_rstd = std::move(ln2.rstd);
        c.ln2_out = std::move(ln2.out);
        c.pre_act = std::move(pre);
        c.act = std::move(act);
      }
    }
    x = std::move(out);
  }
  return x;
}

BlockWeights<double> zero_block_like(const BlockWeights<double>& ref) {
  BlockWeights<double> b = ref;
  b.for_each("", [](const std::string&, Matrix& m) { m.setZero(); });
  return b;
}

}  // namespace

template <typename Scalar>
BasicEncoderParams<Scalar> BasicEncoderParams<Scalar>::shaped(
    const EncoderConfig& config) {
  if (config.dim == 0 || config.vocab_size < 2 || config.max_len < 2) {
    throw UsageError("encoder needs dim > 0, vocab_size >= 2, max_len >= 2");
  }
  const auto v = static_cast<Eigen::Index>(config.dim);
  const auto h = 4 * v;
  BasicEncoderParams p;
  p.config = config;
  p.token_embedding = MatrixT<Scalar>::Zero(static_cast<Eigen::Index>(config.vocab_size), v);
  p.position_embedding = MatrixT<Scalar>::Zero(static_cast<Eigen::Index>(config.max_len), v);
  p.blocks.resize(config.blocks);
  for (auto& b : p.blocks) {
    b.ln1_gain = b.ln1_bias = b.ln2_gain = b.ln2_bias = MatrixT<Scalar>::Zero(1, v);
    b.wq = b.wk = b.wv = b.wo = MatrixT<Scalar>::Zero(v, v);
    b.bq = b.bk = b.bv = b.bo = b.b2 = MatrixT<Scalar>::Zero(1, v);
    b.w1 = MatrixT<Scalar>::Zero(v, h);
    b.b1 = MatrixT<Scalar>::Zero(1, h);
    b.w2 = MatrixT<Scalar>::Zero(h, v);
  }
  return p;
}

template struct BasicEncoderParams<double>;
template struct BasicEncoderParams<float>;

EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed,
                          const InitOptions& init) {
  if (!(init.embedding_std >= 0.0) || !(init.weight_std >= 0.0)) {
    throw UsageError("init standard deviations must be >= 0");
  }
  auto p = EncoderParams::shaped(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double std_dev = init.embedding_std;
  auto fill = [&](Matrix& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = std_dev * normal(rng);
    }
  };
  fill(p.token_embedding);
  fill(p.position_embedding);
  std_dev = init.weight_std;
  for (auto& b : p.blocks) {
    b.ln1_gain.setOnes();
    b.ln2_gain.setOnes();
    fill(b.wq);
    fill(b.wk);
    fill(b.wv);
    fill(b.wo);
    fill(b.w1);
    fill(b.w2);
  }
  return p;
}

void check_params(const EncoderParams& params) {
  const auto expected = EncoderParams::shaped(params.config);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  expected.for_each([&](const std::string&, const Matrix& m) {
    shapes.emplace_back(m.rows(), m.cols());
  });
  if (params.blocks.size() != params.config.blocks) {
    throw DataError("block count does not match configuration");
  }
  std::size_t i = 0;
  params.for_each([&](const std::string& name, const Matrix& m) {
    if (i >= shapes.size() || m.rows() != shapes[i].first ||
        m.cols() != shapes[i].second) {
      throw DataError("tensor " + name + " has the wrong shape");
    }
    if (!m.allFinite()) throw DataError("tensor " + name + " is not finite");
    ++i;
  });
}

double gelu(double x) { return gelu_t(x); }

double gelu_grad(double x) {
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
  return cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

template <typename Scalar>
MatrixT<Scalar> encode(const BasicEncoderParams<Scalar>& params,
                       std::span<const TokenId> tokens) {
  return run<Scalar>(params, tokens, nullptr);
}

template MatrixT<double> encode(const BasicEncoderParams<double>&,
                                std::span<const TokenId>);
template MatrixT<float> encode(const BasicEncoderParams<float>&,
                               std::span<const TokenId>);

Matrix forward(const EncoderParams& params, std::span<const TokenId> tokens,
               ForwardCache* cache) {
  if (cache == nullptr) return run<double>(params, tokens, nullptr);
  cache->tokens.assign(tokens.begin(), tokens.end());
  return run<double>(params, tokens, &cache->blocks);
}

SequenceGradient backward(const EncoderParams& params, const ForwardCache& cache,
                          const Matrix& grad_hidden) {
  const auto len = static_cast<Eigen::Index>(cache.tokens.size());
  if (grad_hidden.rows() != len ||
      grad_hidden.cols() != static_cast<Eigen::Index>(params.config.dim) ||
      cache.blocks.size() != params.blocks.size()) {
    throw DataError("backward: gradient does not match the cached forward pass");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.config.dim));
  SequenceGradient g;
  g.tokens = cache.tokens;
  g.blocks.reserve(params.blocks.size());
  for (const auto& b : params.blocks) g.blocks.push_back(zero_block_like(b));

  Matrix grad = grad_hidden;
  for (std::size_t k = params.blocks.size(); k-- > 0;) {
    const auto& w = params.blocks[k];
    const auto& c = cache.blocks[k];
    auto& gw = g.blocks[k];

    // out = mid + act * w2 + b2
    gw.w2 += c.act.transpose() * grad;
    gw.b2 += grad.colwise().sum();
    Matrix grad_pre = grad * w.w2.transpose();
    grad_pre.array() *= c.pre_act.unaryExpr([](double z) { return gelu_grad(z); }).array();
    gw.w1 += c.ln2_out.transpose() * grad_pre;
    gw.b1 += grad_pre.colwise().sum();
    Matrix grad_mid =
        grad + layer_norm_backward(grad_pre * w.w1.transpose(), c.ln2_hat,
                                   c.ln2_rstd, w.ln2_gain, gw.ln2_gain, gw.ln2_bias);

    // mid = input + context * wo + bo
    gw.wo += c.context.transpose() * grad_mid;
    gw.bo += grad_mid.colwise().sum();
    const Matrix grad_context = grad_mid * w.wo.transpose();
    const Matrix grad_attn = grad_context * c.v.transpose();
    const Matrix grad_v = c.attn.transpose() * grad_context;
    Matrix grad_scores(len, len);
    for (Eigen::Index i = 0; i < len; ++i) {
      const double inner = grad_attn.row(i).dot(c.attn.row(i));
      grad_scores.row(i) =
          (c.attn.row(i).array() * (grad_attn.row(i).array() - inner)).matrix();
    }
    grad_scores *= scale;
    const Matrix grad_q = grad_scores * c.k;
    const Matrix grad_k = grad_scores.transpose() * c.q;
    gw.wq += c.ln1_out.transpose() * grad_q;
    gw.bq += grad_q.colwise().sum();
    gw.wk += c.ln1_out.transpose() * grad_k;
    gw.bk += grad_k.colwise().sum();
    gw.wv += c.ln1_out.transpose() * grad_v;
    gw.bv += grad_v.colwise().sum();
    const Matrix grad_ln1 = grad_q * w.wq.transpose() + grad_k * w.wk.transpose() +
                            grad_v * w.wv.transpose();
    grad = grad_mid + layer_norm_backward(grad_ln1, c.ln1_hat, c.ln1_rstd,
                                          w.ln1_gain, gw.ln1_gain, gw.ln1_bias);
  }
  g.token_rows = grad;
  g.position_rows = std::move(grad);
  return g;
}

void accumulate(const SequenceGradient& seq, EncoderParams& grad) {
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    grad.token_embedding.row(seq.tokens[i]) += seq.token_rows.row(row);
    grad.position_embedding.row(row) += seq.position_rows.row(row);
  }
  for (std::size_t k = 0; k < seq.blocks.size(); ++k) {
    std::vector<const Matrix*> src;
    seq.blocks[k].for_each("", [&](const std::string&, const Matrix& m) {
      src.push_back(&m);
    });
    std::size_t i = 0;
    grad.blocks[k].for_each("", [&](const std::string&, Matrix& m) { m += *src[i++]; });
  }
}

template <typename Scalar>
MatrixT<Scalar> unit_embeddings(const MatrixT<Scalar>& hidden,
                                std::span<const UnitSpan> units) {
  MatrixT<Scalar> e(static_cast<Eigen::Index>(units.size()), hidden.cols());
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& u = units[i];
    if (u.tok_end <= u.tok_start ||
        u.tok_end > static_cast<std::size_t>(hidden.rows())) {
      throw DataError("unit " + std::to_string(i) + " has an invalid token span");
    }
    const auto start = static_cast<Eigen::Index>(u.tok_start);
    const auto count = static_cast<Eigen::Index>(u.token_count());
    e.row(static_cast<Eigen::Index>(i)) =
        hidden.middleRows(start, count).colwise().sum() / static_cast<Scalar>(count);
  }
  return e;
}

template MatrixT<double> unit_embeddings(const MatrixT<double>&,
                                         std::span<const UnitSpan>);
template MatrixT<float> unit_embeddings(const MatrixT<float>&,
                                        std::span<const UnitSpan>);

template <typename Scalar>
VectorT<Scalar> matching_representation(const VectorT<Scalar>& query,
                                        const VectorT<Scalar>& passage) {
  if (query.size() != passage.size()) {
    throw DataError("matching representation needs equal dimensions");
  }
  return query.cwiseProduct(passage).unaryExpr([](Scalar z) { return gelu_t(z); });
}

template VectorT<double> matching_representation(const VectorT<double>&,
                                                 const VectorT<double>&);
template VectorT<float> matching_representation(const VectorT<float>&,
                                                const VectorT<float>&);

}  // namespace unitmatch
