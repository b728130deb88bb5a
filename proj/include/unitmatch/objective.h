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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "unitmatch/corpus.h"
#include "unitmatch/encoder.h"

namespace unitmatch {

struct LossBreakdown {
  double l_c = 0.0;
  double l_extract = 0.0;
  double l_balance = 0.0;
  double total = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
};

// total = l_c + alpha * l_extract + beta * l_balance.
LossBreakdown total_loss(double l_c, double l_extract, double l_balance,
                         double alpha, double beta);

// Softmax over the dot products of `rep` with each row of `units`.
struct UnitDistribution {
  Vector logits;
  Vector probs;
};
UnitDistribution unit_distribution(const Vector& rep, const Matrix& units);

// Numerically stable softmax.
Vector softmax(const Vector& logits);

// KL(uniform || softmax(units * passage)). Zero when n == 1.
double balance_loss(const Vector& passage, const Matrix& units);
// -log softmax(units * match)[label]; `label` is one-hot.
double extract_loss(const Vector& match, const Matrix& units,
                    std::span<const int> label);
// -log of the positive's share among positive + negatives (rows).
double contrastive_loss(const Vector& query, const Vector& positive,
                        const Matrix& negatives);

struct BalanceGradient {
  double loss = 0.0;
  Vector d_passage;
  Matrix d_units;
};
BalanceGradient balance_loss_grad(const Vector& passage, const Matrix& units);

struct ExtractGradient {
  double loss = 0.0;
  Vector d_logits;  // probs - Y
  Vector d_match;
  Matrix d_units;
};
ExtractGradient extract_loss_grad(const Vector& match, const Matrix& units,
                                  std::size_t label);

struct ContrastiveGradient {
  double loss = 0.0;
  Vector d_query;
  Vector d_positive;
  Matrix d_negatives;
};
ContrastiveGradient contrastive_loss_grad(const Vector& query,
                                          const Vector& positive,
                                          const Matrix& negatives);

enum class NegativeMode {
  kInBatch,  // positives of the other pairs plus any file negatives
  kSingle,   // one negative: first file negative, else the next pair's positive
  kFile,     // file-supplied hard negatives only
};

NegativeMode parse_negative_mode(const std::string& name);
std::string to_string(NegativeMode mode);

// One positive pair with its essential-matching-unit label.
struct TrainingPair {
  const Query* query = nullptr;
  const Passage* positive = nullptr;
  std::size_t label = 0;  // index into positive->units
  std::vector<const Passage*> hard_negatives;
};

// Relative weights of the three terms. gradients() uses {1, alpha, beta};
// the gradient checker isolates single terms.
struct LossWeights {
  double contrastive = 1.0;
  double extract = 0.1;
  double balance = 1.0;
};

struct BatchOptions {
  NegativeMode negatives = NegativeMode::kInBatch;
  std::size_t threads = 1;
};

struct BatchResult {
  LossBreakdown loss;            // batch means; total uses the given weights
  std::vector<double> per_pair;  // weighted loss of each pair
  EncoderParams grad;            // d(mean weighted loss) / d(params)
};

// Mean weighted loss over the batch and, when `with_gradient`, its exact
// gradient with respect to every parameter. Throws DataError naming the
// pair when a label or unit span does not fit the passage, and
// NumericError when a pair's loss is not finite.
BatchResult evaluate_batch(const EncoderParams& params,
                           std::span<const TrainingPair> batch,
                           const LossWeights& weights,
                           const BatchOptions& options, bool with_gradient);

// Mean total loss L_c + alpha L_extract + beta L_balance and its gradient.
BatchResult gradients(const EncoderParams& params,
                      std::span<const TrainingPair> batch, double alpha,
                      double beta, const BatchOptions& options = {});

// Runs fn(i) for i in [0, n) on up to `threads` threads. Each index is
// handled exactly once; results must go to per-index slots.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn);

}  // namespace unitmatch

#include "unitmatch/parallel_inl.h"
