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
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "unitmatch/annotator.h"
#include "unitmatch/checkpoint.h"
#include "unitmatch/corpus.h"
#include "unitmatch/encoder.h"
#include "unitmatch/objective.h"

namespace unitmatch {

enum class TrainMode {
  kBerm,     // contrastive + alpha * extract + beta * balance
  kControl,  // contrastive only; the auxiliary terms are still reported
};

struct TrainConfig {
  double alpha = 0.1;
  double beta = 1.0;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 16;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0: no cap beyond epochs
  std::uint64_t seed = 42;
  NegativeMode negatives = NegativeMode::kInBatch;
  std::size_t checkpoint_every = 0;  // epochs between state checkpoints; 0: none
  TrainMode mode = TrainMode::kBerm;
  std::size_t dim = 64;
  std::size_t blocks = 2;
  std::size_t max_len = kDefaultMaxLen;
  std::size_t threads = 1;
  std::string negatives_file;  // optional negatives.jsonl
  InitOptions init;            // embedding_std / weight_std in config.json

  // Weights actually applied; control mode zeroes both.
  double effective_alpha() const { return mode == TrainMode::kControl ? 0.0 : alpha; }
  double effective_beta() const { return mode == TrainMode::kControl ? 0.0 : beta; }

  // Throws UsageError on an invalid combination.
  void validate() const;
};

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& config);

struct TrainState {
  EncoderParams params;
  EncoderParams first_moment;
  EncoderParams second_moment;
  std::uint64_t step = 0;
  // Sums over the steps taken so far in the current epoch.
  LossBreakdown epoch_sum;
  std::size_t epoch_steps = 0;
};

TrainState initial_state(const EncoderConfig& encoder, std::uint64_t seed,
                         const InitOptions& init = {});

// One Adam update on `batch`. A learning rate of 0 leaves params unchanged
// but still advances the step and moments.
LossBreakdown train_step(TrainState& state, std::span<const TrainingPair> batch,
                         const TrainConfig& config);

struct EpochLog {
  std::size_t epoch = 0;
  std::uint64_t step = 0;  // steps completed at the end of the epoch
  std::size_t batches = 0;
  LossBreakdown mean;
};

nlohmann::json to_json(const EpochLog& log);

// Owns tokenized passages/queries so that TrainingPair pointers stay valid.
class TrainingData {
 public:
  TrainingData() = default;
  TrainingData(const TrainingData&) = delete;
  TrainingData& operator=(const TrainingData&) = delete;
  TrainingData(TrainingData&&) = default;
  TrainingData& operator=(TrainingData&&) = default;

  const Vocabulary& vocab() const { return vocab_; }
  std::span<const TrainingPair> pairs() const { return pairs_; }
  std::span<const Passage> passages() const { return *passages_; }
  std::span<const Query> queries() const { return *queries_; }
  std::size_t max_len() const { return max_len_; }

  friend TrainingData build_training_data(
      std::span<const Document> corpus, std::span<const Document> queries,
      std::span<const AnnotatedPair> annotations,
      const std::map<std::string, std::vector<std::string>>& hard_negatives,
      std::size_t max_len, const Vocabulary* vocab);

 private:
  Vocabulary vocab_;
  std::unique_ptr<std::vector<Passage>> passages_ =
      std::make_unique<std::vector<Passage>>();
  std::unique_ptr<std::vector<Query>> queries_ = std::make_unique<std::vector<Query>>();
  std::vector<TrainingPair> pairs_;
  std::size_t max_len_ = kDefaultMaxLen;
};

// Tokenizes the corpus (vocabulary built from it unless `vocab` is given)
// and resolves each annotation into a TrainingPair. Throws DataError naming
// the pair when an id is unknown or the annotated units do not line up
// with the passage's own segmentation.
TrainingData build_training_data(
    std::span<const Document> corpus, std::span<const Document> queries,
    std::span<const AnnotatedPair> annotations,
    const std::map<std::string, std::vector<std::string>>& hard_negatives = {},
    std::size_t max_len = kDefaultMaxLen, const Vocabulary* vocab = nullptr);

// negatives.jsonl: {"query_id": str, "passage_ids": [str, ...]}
std::map<std::string, std::vector<std::string>> load_hard_negatives(
    const std::filesystem::path& path);

// Seeded mini-batch loop. Batch contents depend only on (seed, step), so a
// run resumed from a saved state follows the uninterrupted trajectory.
class Trainer {
 public:
  Trainer(TrainConfig config, std::span<const TrainingPair> pairs);

  const TrainConfig& config() const { return config_; }
  std::size_t batches_per_epoch() const { return batches_per_epoch_; }
  std::uint64_t total_steps() const;

  // Pair indices of the batch taken at `step`.
  std::vector<std::size_t> batch_indices(std::uint64_t step) const;

  LossBreakdown step(TrainState& state) const;

  using EpochCallback = std::function<void(const TrainState&, const EpochLog&)>;
  // Steps until total_steps(); calls `on_epoch` at every epoch boundary (and
  // once after a max_steps cut-off).
  std::vector<EpochLog> run(TrainState& state, const EpochCallback& on_epoch = {}) const;

 private:
  TrainConfig config_;
  std::span<const TrainingPair> pairs_;
  std::size_t batches_per_epoch_ = 0;
};

// Epoch permutation of [0, n) derived from (seed, epoch) alone.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                     std::uint64_t epoch);

Checkpoint to_checkpoint(const TrainState& state, const Vocabulary& vocab,
                         const TrainConfig& config, bool with_optimizer);
TrainState from_checkpoint(const Checkpoint& ckpt);

struct GradientCheckEntry {
  std::string term;    // contrastive | extract | balance | total
  std::string tensor;
  Eigen::Index row = 0;
  Eigen::Index col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradientReport {
  std::size_t coordinates = 0;
  std::map<std::string, double> max_relative_error;  // per term
  std::vector<GradientCheckEntry> failures;
  bool passed() const { return failures.empty(); }
};

struct GradientCheckOptions {
  std::size_t coordinates = 100;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  double alpha = 0.1;
  double beta = 1.0;
  NegativeMode negatives = NegativeMode::kInBatch;
};

// |a - n| / max(|a|, |n|, 1e-6). The floor sits above the rounding noise of
// central differences (~1e-11 for O(1) losses at step 1e-5), so gradients
// below 1e-6 are held to an absolute 1e-10 at the default tolerance.
double relative_error(double analytic, double numeric);

// Central differences on randomly drawn coordinates versus the analytic
// gradient, for each loss term separately and for the weighted total.
// Token-embedding rows are drawn from tokens present in the batch and
// position rows from positions the batch uses. The attention key bias has an
// identically zero gradient; it is asserted to vanish instead of sampled.
GradientReport verify_gradients(const EncoderParams& params,
                                std::span<const TrainingPair> batch,
                                const GradientCheckOptions& options = {});

}  // namespace unitmatch
