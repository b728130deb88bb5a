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

#include "unitmatch/objective.h"

#include <cmath>

#include "unitmatch/error.h"

namespace unitmatch {

namespace {

double log_sum_exp(const Vector& x) {
  const double top = x.maxCoeff();
  return top + std::log((x.array() - top).exp().sum());
}

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw DataError(std::string(what) + " is not finite");
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw DataError(std::string(what) + " is not finite");
}

std::size_t label_from_one_hot(std::span<const int> label, std::size_t n) {
  if (label.size() != n) throw DataError("label length does not match units");
  std::size_t hot = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] == 1 && hot == n) {
      hot = i;
    } else if (label[i] != 0) {
      throw DataError("label must be one-hot");
    }
  }
  if (hot == n) throw DataError("label must be one-hot");
  return hot;
}

std::string pair_name(const TrainingPair& p) {
  return "(" + (p.query ? p.query->id : std::string("?")) + ", " +
         (p.positive ? p.positive->id : std::string("?")) + ")";
}

// Rows of `ids` stacked into a matrix.
Matrix stack_rows(const std::vector<Vector>& reps, const std::vector<std::size_t>& ids,
                  Eigen::Index dim) {
  Matrix m(static_cast<Eigen::Index>(ids.size()), dim);
  for (std::size_t j = 0; j < ids.size(); ++j) {
    m.row(static_cast<Eigen::Index>(j)) = reps[ids[j]].transpose();
  }
  return m;
}

}  // namespace

LossBreakdown total_loss(double l_c, double l_extract, double l_balance,
                         double alpha, double beta) {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) {
    throw UsageError("loss weights must be >= 0");
  }
  return {l_c, l_extract, l_balance, l_c + alpha * l_extract + beta * l_balance,
          alpha, beta};
}

Vector softmax(const Vector& logits) {
  Vector p = (logits.array() - logits.maxCoeff()).exp().matrix();
  return p / p.sum();
}

UnitDistribution unit_distribution(const Vector& rep, const Matrix& units) {
  if (units.rows() == 0 || units.cols() != rep.size()) {
    throw DataError("unit distribution needs n >= 1 units of matching dimension");
  }
  Vector logits = units * rep;
  Vector probs = softmax(logits);
  return {std::move(logits), std::move(probs)};
}

BalanceGradient balance_loss_grad(const Vector& passage, const Matrix& units) {
  require_finite(passage, "passage representation");
  require_finite(units, "unit embeddings");
  const auto n = units.rows();
  if (n == 0 || units.cols() != passage.size()) {
    throw DataError("balance loss needs n >= 1 units of matching dimension");
  }
  BalanceGradient g;
  if (n == 1) {
    g.d_passage = Vector::Zero(passage.size());
    g.d_units = Matrix::Zero(1, passage.size());
    return g;
  }
  const Vector logits = units * passage;
  const double lse = log_sum_exp(logits);
  const double uniform = 1.0 / static_cast<double>(n);
  // sum_i b_i ln(b_i / q_i) with ln q_i = logit_i - lse
  g.loss = std::log(uniform) - uniform * (logits.array() - lse).sum();
  const Vector d_logits = softmax(logits).array() - uniform;
  g.d_passage = units.transpose() * d_logits;
  g.d_units = d_logits * passage.transpose();
  return g;
}

double balance_loss(const Vector& passage, const Matrix& units) {
  return balance_loss_grad(passage, units).loss;
}

ExtractGradient extract_loss_grad(const Vector& match, const Matrix& units,
                                  std::size_t label) {
  require_finite(match, "matching representation");
  require_finite(units, "unit embeddings");
  const auto n = units.rows();
  if (n == 0 || units.cols() != match.size()) {
    throw DataError("extract loss needs n >= 1 units of matching dimension");
  }
  if (label >= static_cast<std::size_t>(n)) throw DataError("label out of range");
  ExtractGradient g;
  const Vector logits = units * match;
  const auto hot = static_cast<Eigen::Index>(label);
  g.loss = n == 1 ? 0.0 : log_sum_exp(logits) - logits(hot);
  g.d_logits = softmax(logits);
  g.d_logits(hot) -= 1.0;
  g.d_match = units.transpose() * g.d_logits;
  g.d_units = g.d_logits * match.transpose();
  return g;
}

double extract_loss(const Vector& match, const Matrix& units,
                    std::span<const int> label) {
  return extract_loss_grad(match, units,
                           label_from_one_hot(label, static_cast<std::size_t>(units.rows())))
      .loss;
}

ContrastiveGradient contrastive_loss_grad(const Vector& query,
                                          const Vector& positive,
                                          const Matrix& negatives) {
  require_finite(query, "query representation");
  require_finite(positive, "positive representation");
  require_finite(negatives, "negative representations");
  if (negatives.rows() == 0) throw DataError("contrastive loss needs a negative");
  if (positive.size() != query.size() || negatives.cols() != query.size()) {
    throw DataError("contrastive loss needs equal dimensions");
  }
  Vector logits(negatives.rows() + 1);
  logits(0) = query.dot(positive);
  logits.tail(negatives.rows()) = negatives * query;
  ContrastiveGradient g;
  g.loss = log_sum_exp(logits) - logits(0);
  Vector d_logits = softmax(logits);
  d_logits(0) -= 1.0;
  const auto d_neg = d_logits.tail(negatives.rows());
  g.d_query = d_logits(0) * positive + negatives.transpose() * d_neg;
  g.d_positive = d_logits(0) * query;
  g.d_negatives = d_neg * query.transpose();
  return g;
}

double contrastive_loss(const Vector& query, const Vector& positive,
                        const Matrix& negatives) {
  return contrastive_loss_grad(query, positive, negatives).loss;
}

NegativeMode parse_negative_mode(const std::string& name) {
  if (name == "in-batch") return NegativeMode::kInBatch;
  if (name == "single") return NegativeMode::kSingle;
  if (name == "file") return NegativeMode::kFile;
  throw UsageError("unknown negative mode '" + name +
                   "' (expected in-batch, single or file)");
}

std::string to_string(NegativeMode mode) {
  switch (mode) {
    case NegativeMode::kInBatch:
      return "in-batch";
    case NegativeMode::kSingle:
      return "single";
    case NegativeMode::kFile:
      return "file";
  }
  return "in-batch";
}

BatchResult evaluate_batch(const EncoderParams& params,
                           std::span<const TrainingPair> batch,
                           const LossWeights& weights,
                           const BatchOptions& options, bool with_gradient) {
  if (batch.empty()) throw DataError("empty batch");
  const std::size_t pairs = batch.size();

  // Sequence layout: query i at 2i, positive i at 2i + 1, then negatives.
  std::vector<const TokenSequence*> sequences(2 * pairs);
  std::vector<std::vector<std::size_t>> negatives(pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    const auto& p = batch[i];
    if (p.query == nullptr || p.positive == nullptr) {
      throw DataError("incomplete training pair " + pair_name(p));
    }
    if (p.label >= p.positive->units.size()) {
      throw DataError("label outside the units of pair " + pair_name(p));
    }
    for (const auto& u : p.positive->units) {
      if (u.tok_start < 1 || u.tok_end <= u.tok_start ||
          u.tok_end > p.positive->tokens.size()) {
        throw DataError("unit span does not fit the tokens of pair " + pair_name(p));
      }
    }
    sequences[2 * i] = &p.query->tokens;
    sequences[2 * i + 1] = &p.positive->tokens;
  }
  for (std::size_t i = 0; i < pairs; ++i) {
    const auto& p = batch[i];
    auto add_file_negatives = [&](std::size_t limit) {
      for (std::size_t h = 0; h < p.hard_negatives.size() && h < limit; ++h) {
        if (p.hard_negatives[h]->id == p.positive->id) continue;
        negatives[i].push_back(sequences.size());
        sequences.push_back(&p.hard_negatives[h]->tokens);
      }
    };
    switch (options.negatives) {
      case NegativeMode::kInBatch:
        for (std::size_t j = 0; j < pairs; ++j) {
          if (j != i && batch[j].positive->id != p.positive->id) {
            negatives[i].push_back(2 * j + 1);
          }
        }
        add_file_negatives(p.hard_negatives.size());
        break;
      case NegativeMode::kSingle:
        add_file_negatives(1);
        for (std::size_t step = 1; step < pairs && negatives[i].empty(); ++step) {
          const std::size_t j = (i + step) % pairs;
          if (batch[j].positive->id != p.positive->id) negatives[i].push_back(2 * j + 1);
        }
        break;
      case NegativeMode::kFile:
        add_file_negatives(p.hard_negatives.size());
        break;
    }
    if (negatives[i].empty()) {
      throw DataError("no negative available for pair " + pair_name(p));
    }
  }

  const std::size_t count = sequences.size();
  std::vector<ForwardCache> caches(with_gradient ? count : 0);
  std::vector<Matrix> hidden(count);
  parallel_for(count, options.threads, [&](std::size_t s) {
    hidden[s] = forward(params, *sequences[s], with_gradient ? &caches[s] : nullptr);
  });
  const auto dim = static_cast<Eigen::Index>(params.config.dim);
  std::vector<Vector> reps(count);
  for (std::size_t s = 0; s < count; ++s) reps[s] = text_representation(hidden[s]);

  std::vector<Matrix> grad_hidden;
  if (with_gradient) {
    grad_hidden.resize(count);
    for (std::size_t s = 0; s < count; ++s) {
      grad_hidden[s] = Matrix::Zero(hidden[s].rows(), dim);
    }
  }

  const double inv = 1.0 / static_cast<double>(pairs);
  double sum_c = 0.0, sum_e = 0.0, sum_b = 0.0;
  BatchResult result;
  result.per_pair.resize(pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    const auto& p = batch[i];
    const std::size_t qs = 2 * i, ps = 2 * i + 1;
    const Vector& t_q = reps[qs];
    const Vector& t_p = reps[ps];
    const Matrix units = unit_embeddings(hidden[ps], std::span(p.positive->units));
    const Vector pre = t_q.cwiseProduct(t_p);
    const Vector match = matching_representation(t_q, t_p);

    auto con = contrastive_loss_grad(t_q, t_p, stack_rows(reps, negatives[i], dim));
    auto ext = extract_loss_grad(match, units, p.label);
    auto bal = balance_loss_grad(t_p, units);
    const double weighted = weights.contrastive * con.loss +
                            weights.extract * ext.loss + weights.balance * bal.loss;
    if (!std::isfinite(weighted)) {
      throw NumericError("non-finite loss for pair " + pair_name(p));
    }
    result.per_pair[i] = weighted;
    sum_c += con.loss;
    sum_e += ext.loss;
    sum_b += bal.loss;
    if (!with_gradient) continue;

    const double wc = weights.contrastive * inv;
    const double we = weights.extract * inv;
    const double wb = weights.balance * inv;
    const Vector d_pre =
        (we * ext.d_match).cwiseProduct(pre.unaryExpr([](double z) { return gelu_grad(z); }));
    Vector d_tq = wc * con.d_query + d_pre.cwiseProduct(t_p);
    Vector d_tp = wc * con.d_positive + d_pre.cwiseProduct(t_q) + wb * bal.d_passage;
    const Matrix d_units = we * ext.d_units + wb * bal.d_units;

    grad_hidden[qs].row(0) += d_tq.transpose();
    grad_hidden[ps].row(0) += d_tp.transpose();
    for (std::size_t u = 0; u < p.positive->units.size(); ++u) {
      const auto& span = p.positive->units[u];
      const double share = 1.0 / static_cast<double>(span.token_count());
      grad_hidden[ps]
          .middleRows(static_cast<Eigen::Index>(span.tok_start),
                      static_cast<Eigen::Index>(span.token_count()))
          .rowwise() += share * d_units.row(static_cast<Eigen::Index>(u));
    }
    for (std::size_t j = 0; j < negatives[i].size(); ++j) {
      grad_hidden[negatives[i][j]].row(0) +=
          wc * con.d_negatives.row(static_cast<Eigen::Index>(j));
    }
  }

  const LossWeights& w = weights;
  result.loss = total_loss(sum_c * inv, sum_e * inv, sum_b * inv, w.extract, w.balance);
  if (w.contrastive != 1.0) {
    result.loss.total = w.contrastive * result.loss.l_c + w.extract * result.loss.l_extract +
                        w.balance * result.loss.l_balance;
  }

  if (with_gradient) {
    std::vector<SequenceGradient> seq_grads(count);
    parallel_for(count, options.threads, [&](std::size_t s) {
      seq_grads[s] = backward(params, caches[s], grad_hidden[s]);
    });
    result.grad = EncoderParams::shaped(params.config);
    for (const auto& g : seq_grads) accumulate(g, result.grad);
  }
  return result;
}

BatchResult gradients(const EncoderParams& params,
                      std::span<const TrainingPair> batch, double alpha,
                      double beta, const BatchOptions& options) {
  return evaluate_batch(params, batch, LossWeights{1.0, alpha, beta}, options, true);
}

}  // namespace unitmatch
