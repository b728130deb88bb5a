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

#include "unitmatch/trainer.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <utility>

#include "unitmatch/error.h"
#include "unitmatch/random.h"

namespace unitmatch {

namespace {

void add_into(LossBreakdown& sum, const LossBreakdown& x) {
  sum.l_c += x.l_c;
  sum.l_extract += x.l_extract;
  sum.l_balance += x.l_balance;
  sum.total += x.total;
}

std::vector<Matrix*> tensors_of(EncoderParams& p) {
  std::vector<Matrix*> out;
  p.for_each([&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<const Matrix*> tensors_of(const EncoderParams& p) {
  std::vector<const Matrix*> out;
  p.for_each([&](const std::string&, const Matrix& m) { out.push_back(&m); });
  return out;
}

const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys{
      "alpha",      "beta",           "learning_rate", "adam_beta1", "adam_beta2",
      "adam_epsilon", "batch_size",   "epochs",        "max_steps",  "seed",
      "negatives",  "checkpoint_every", "mode",        "dim",        "blocks",
      "max_len",    "threads",        "negatives_file", "embedding_std", "weight_std"};
  return keys;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw UsageError("alpha and beta must be >= 0");
  if (!(learning_rate >= 0.0)) throw UsageError("learning_rate must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw UsageError("Adam moment parameters must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw UsageError("adam_epsilon must be > 0");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (negatives == NegativeMode::kInBatch && batch_size < 2) {
    throw UsageError("in-batch negatives need batch_size >= 2");
  }
  if (dim == 0 || max_len < 2) throw UsageError("dim must be > 0 and max_len >= 2");
  if (threads == 0) throw UsageError("threads must be >= 1");
  if (!(init.embedding_std >= 0.0) || !(init.weight_std >= 0.0)) {
    throw UsageError("init scales must be >= 0");
  }
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("training config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!config_keys().contains(key)) throw UsageError("unknown config key '" + key + "'");
  }
  TrainConfig c;
  try {
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.seed = j.value("seed", c.seed);
    c.negatives = parse_negative_mode(j.value("negatives", to_string(c.negatives)));
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    const auto mode = j.value("mode", std::string("berm"));
    if (mode == "berm") {
      c.mode = TrainMode::kBerm;
    } else if (mode == "control") {
      c.mode = TrainMode::kControl;
    } else {
      throw UsageError("mode must be 'berm' or 'control'");
    }
    c.dim = j.value("dim", c.dim);
    c.blocks = j.value("blocks", c.blocks);
    c.max_len = j.value("max_len", c.max_len);
    c.threads = j.value("threads", c.threads);
    c.negatives_file = j.value("negatives_file", c.negatives_file);
    c.init.embedding_std = j.value("embedding_std", c.init.embedding_std);
    c.init.weight_std = j.value("weight_std", c.init.weight_std);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("invalid training config: " + std::string(e.what()));
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"alpha", c.alpha},
          {"beta", c.beta},
          {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"max_steps", c.max_steps},
          {"seed", c.seed},
          {"negatives", to_string(c.negatives)},
          {"checkpoint_every", c.checkpoint_every},
          {"mode", c.mode == TrainMode::kControl ? "control" : "berm"},
          {"dim", c.dim},
          {"blocks", c.blocks},
          {"max_len", c.max_len},
          {"threads", c.threads},
          {"negatives_file", c.negatives_file},
          {"embedding_std", c.init.embedding_std},
          {"weight_std", c.init.weight_std}};
}

nlohmann::json to_json(const EpochLog& log) {
  return {{"epoch", log.epoch},
          {"step", log.step},
          {"batches", log.batches},
          {"l_c", log.mean.l_c},
          {"l_extract", log.mean.l_extract},
          {"l_balance", log.mean.l_balance},
          {"total", log.mean.total},
          {"alpha", log.mean.alpha},
          {"beta", log.mean.beta}};
}

TrainState initial_state(const EncoderConfig& encoder, std::uint64_t seed,
                         const InitOptions& init) {
  TrainState s;
  s.params = init_params(encoder, seed, init);
  s.first_moment = EncoderParams::shaped(encoder);
  s.second_moment = EncoderParams::shaped(encoder);
  return s;
}

LossBreakdown train_step(TrainState& state, std::span<const TrainingPair> batch,
                         const TrainConfig& config) {
  const double alpha = config.effective_alpha();
  const double beta = config.effective_beta();
  auto result = gradients(state.params, batch, alpha, beta,
                          BatchOptions{config.negatives, config.threads});

  const double t = static_cast<double>(state.step + 1);
  const double correct1 = 1.0 - std::pow(config.adam_beta1, t);
  const double correct2 = 1.0 - std::pow(config.adam_beta2, t);
  auto params = tensors_of(state.params);
  auto m1 = tensors_of(state.first_moment);
  auto m2 = tensors_of(state.second_moment);
  const auto grads = tensors_of(result.grad);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = *grads[i];
    if (!g.allFinite()) throw NumericError("non-finite gradient at step " + std::to_string(state.step));
    *m1[i] = config.adam_beta1 * *m1[i] + (1.0 - config.adam_beta1) * g;
    *m2[i] = config.adam_beta2 * *m2[i] + (1.0 - config.adam_beta2) * g.cwiseAbs2();
    if (config.learning_rate == 0.0) continue;
    const auto mhat = m1[i]->array() / correct1;
    const auto vhat = m2[i]->array() / correct2;
    params[i]->array() -= config.learning_rate * mhat / (vhat.sqrt() + config.adam_epsilon);
  }
  ++state.step;
  add_into(state.epoch_sum, result.loss);
  ++state.epoch_steps;
  return result.loss;
}

TrainingData build_training_data(
    std::span<const Document> corpus, std::span<const Document> queries,
    std::span<const AnnotatedPair> annotations,
    const std::map<std::string, std::vector<std::string>>& hard_negatives,
    std::size_t max_len, const Vocabulary* vocab) {
  if (annotations.empty()) throw DataError("no annotated pairs to train on");
  TrainingData data;
  data.max_len_ = max_len;
  data.vocab_ = vocab != nullptr ? *vocab : Vocabulary::build(texts_of(corpus));

  data.passages_->reserve(corpus.size());
  for (const auto& doc : corpus) data.passages_->push_back(make_passage(doc, data.vocab_, max_len));
  const auto passage_index = index_by_id(std::span<const Passage>(*data.passages_));
  const auto query_docs = index_by_id(queries);

  std::map<std::string, std::size_t> query_slot;
  for (const auto& a : annotations) {
    if (query_slot.contains(a.query_id)) continue;
    auto it = query_docs.find(a.query_id);
    if (it == query_docs.end()) {
      throw DataError("annotation (" + a.query_id + ", " + a.passage_id +
                      ") references an unknown query");
    }
    query_slot[a.query_id] = data.queries_->size();
    data.queries_->push_back(make_query(queries[it->second], data.vocab_, max_len));
  }

  auto lookup = [&](const std::string& id, const AnnotatedPair& a) -> const Passage* {
    auto it = passage_index.find(id);
    if (it == passage_index.end()) {
      throw DataError("pair (" + a.query_id + ", " + a.passage_id +
                      ") references unknown passage '" + id + "'");
    }
    return &(*data.passages_)[it->second];
  };

  for (const auto& a : annotations) {
    TrainingPair pair;
    pair.query = &(*data.queries_)[query_slot.at(a.query_id)];
    pair.positive = lookup(a.passage_id, a);
    const auto& units = pair.positive->units;
    bool aligned = units.size() == a.units.size();
    for (std::size_t i = 0; aligned && i < units.size(); ++i) {
      aligned = units[i].tok_start == a.units[i].tok_start &&
                units[i].tok_end == a.units[i].tok_end;
    }
    if (!aligned || a.label.size() != units.size()) {
      throw DataError("annotation (" + a.query_id + ", " + a.passage_id +
                      ") does not match the passage's units");
    }
    pair.label = a.label_index();
    if (auto neg = hard_negatives.find(a.query_id); neg != hard_negatives.end()) {
      for (const auto& id : neg->second) pair.hard_negatives.push_back(lookup(id, a));
    }
    data.pairs_.push_back(std::move(pair));
  }
  return data;
}

std::map<std::string, std::vector<std::string>> load_hard_negatives(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::map<std::string, std::vector<std::string>> table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto obj = nlohmann::json::parse(line);
      auto& ids = table[obj.at("query_id").get<std::string>()];
      for (const auto& id : obj.at("passage_ids")) ids.push_back(id.get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": malformed negatives record: " + e.what());
    }
  }
  return table;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                     std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SplitMix64 rng(seed ^ (0xD1B54A32D192ED03ULL * (epoch + 1)));
  rng.shuffle(order);
  return order;
}

Trainer::Trainer(TrainConfig config, std::span<const TrainingPair> pairs)
    : config_(std::move(config)), pairs_(pairs) {
  config_.validate();
  if (pairs_.empty()) throw DataError("no annotated pairs to train on");
  const std::size_t min_batch = config_.negatives == NegativeMode::kFile ? 1 : 2;
  const std::size_t n = pairs_.size();
  batches_per_epoch_ = n / config_.batch_size;
  // A trailing partial batch is kept when it can still form negatives.
  if (n % config_.batch_size >= min_batch) ++batches_per_epoch_;
  if (batches_per_epoch_ == 0) {
    throw DataError("too few pairs (" + std::to_string(n) + ") to form a batch");
  }
}

std::uint64_t Trainer::total_steps() const {
  const std::uint64_t full = static_cast<std::uint64_t>(config_.epochs) * batches_per_epoch_;
  return config_.max_steps > 0 ? std::min<std::uint64_t>(full, config_.max_steps) : full;
}

std::vector<std::size_t> Trainer::batch_indices(std::uint64_t step) const {
  const std::uint64_t epoch = step / batches_per_epoch_;
  const std::size_t b = static_cast<std::size_t>(step % batches_per_epoch_);
  const auto order = epoch_order(pairs_.size(), config_.seed, epoch);
  const std::size_t begin = b * config_.batch_size;
  const std::size_t end = std::min(begin + config_.batch_size, order.size());
  return {order.begin() + static_cast<std::ptrdiff_t>(begin),
          order.begin() + static_cast<std::ptrdiff_t>(end)};
}

LossBreakdown Trainer::step(TrainState& state) const {
  std::vector<TrainingPair> batch;
  for (std::size_t i : batch_indices(state.step)) batch.push_back(pairs_[i]);
  return train_step(state, batch, config_);
}

std::vector<EpochLog> Trainer::run(TrainState& state, const EpochCallback& on_epoch) const {
  std::vector<EpochLog> logs;
  const std::uint64_t last = total_steps();
  while (state.step < last) {
    step(state);
    const bool boundary = state.step % batches_per_epoch_ == 0;
    if (!boundary && state.step != last) continue;
    EpochLog log;
    log.epoch = static_cast<std::size_t>((state.step - 1) / batches_per_epoch_);
    log.step = state.step;
    log.batches = state.epoch_steps;
    const double k = static_cast<double>(state.epoch_steps);
    log.mean = total_loss(state.epoch_sum.l_c / k, state.epoch_sum.l_extract / k,
                          state.epoch_sum.l_balance / k, config_.effective_alpha(),
                          config_.effective_beta());
    state.epoch_sum = {};
    state.epoch_steps = 0;
    logs.push_back(log);
    if (on_epoch) on_epoch(state, log);
  }
  return logs;
}

Checkpoint to_checkpoint(const TrainState& state, const Vocabulary& vocab,
                         const TrainConfig& config, bool with_optimizer) {
  Checkpoint ckpt{vocab, state.params, std::nullopt, nlohmann::json::object()};
  ckpt.metadata["train_config"] = to_json(config);
  ckpt.metadata["step"] = state.step;
  if (with_optimizer) {
    ckpt.optimizer = OptimizerState{state.first_moment, state.second_moment, state.step};
    ckpt.metadata["epoch_sum"] = {state.epoch_sum.l_c, state.epoch_sum.l_extract,
                                  state.epoch_sum.l_balance, state.epoch_sum.total};
    ckpt.metadata["epoch_steps"] = state.epoch_steps;
  }
  return ckpt;
}

TrainState from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.optimizer) throw DataError("checkpoint has no optimizer state to resume from");
  TrainState s;
  s.params = ckpt.params;
  s.first_moment = ckpt.optimizer->first_moment;
  s.second_moment = ckpt.optimizer->second_moment;
  s.step = ckpt.optimizer->step;
  try {
    const auto& sum = ckpt.metadata.at("epoch_sum");
    s.epoch_sum.l_c = sum.at(0).get<double>();
    s.epoch_sum.l_extract = sum.at(1).get<double>();
    s.epoch_sum.l_balance = sum.at(2).get<double>();
    s.epoch_sum.total = sum.at(3).get<double>();
    s.epoch_steps = ckpt.metadata.at("epoch_steps").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint lacks loop state: " + std::string(e.what()));
  }
  return s;
}

namespace {
constexpr double kZeroGradientTolerance = 1e-12;
}  // namespace

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

GradientReport verify_gradients(const EncoderParams& params,
                                std::span<const TrainingPair> batch,
                                const GradientCheckOptions& options) {
  const BatchOptions batch_opts{options.negatives, 1};
  const std::vector<std::pair<std::string, LossWeights>> terms{
      {"contrastive", {1.0, 0.0, 0.0}},
      {"extract", {0.0, 1.0, 0.0}},
      {"balance", {0.0, 0.0, 1.0}},
      {"total", {1.0, options.alpha, options.beta}}};
  std::vector<EncoderParams> analytic;
  for (const auto& [name, w] : terms) {
    analytic.push_back(evaluate_batch(params, batch, w, batch_opts, true).grad);
  }

  std::vector<std::string> names;
  params.for_each([&](const std::string& name, const Matrix&) { names.push_back(name); });
  std::set<TokenId> used_tokens;
  std::size_t longest = 0;
  for (const auto& p : batch) {
    std::vector<const TokenSequence*> seqs{&p.query->tokens, &p.positive->tokens};
    for (const auto* h : p.hard_negatives) seqs.push_back(&h->tokens);
    for (const auto* s : seqs) {
      used_tokens.insert(s->begin(), s->end());
      longest = std::max(longest, s->size());
    }
  }
  const std::vector<TokenId> token_pool(used_tokens.begin(), used_tokens.end());

  EncoderParams probe = params;
  auto probe_tensors = tensors_of(probe);
  std::mt19937_64 rng(options.seed);
  auto draw = [&](std::size_t bound) {
    return static_cast<Eigen::Index>(std::uniform_int_distribution<std::size_t>(0, bound - 1)(rng));
  };

  GradientReport report;
  report.coordinates = options.coordinates;
  for (const auto& [name, w] : terms) report.max_relative_error[name] = 0.0;

  // The key bias shifts every score of a softmax row by the same amount, so
  // its exact gradient is zero and central differences return pure rounding
  // noise. It is checked for vanishing instead of being sampled.
  std::vector<std::size_t> sampled;
  for (std::size_t t = 0; t < names.size(); ++t) {
    if (!names[t].ends_with("attn.bk")) {
      sampled.push_back(t);
      continue;
    }
    for (std::size_t k = 0; k < terms.size(); ++k) {
      const Matrix& g = *tensors_of(std::as_const(analytic[k]))[t];
      const double worst = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
      if (worst > kZeroGradientTolerance) {
        report.failures.push_back({terms[k].first, names[t], 0, 0, worst, 0.0, worst});
      }
    }
  }

  for (std::size_t c = 0; c < options.coordinates; ++c) {
    const auto t = sampled[static_cast<std::size_t>(draw(sampled.size()))];
    Matrix& m = *probe_tensors[t];
    Eigen::Index row;
    if (t == 0) {
      row = token_pool[static_cast<std::size_t>(draw(token_pool.size()))];
    } else if (t == 1) {
      row = draw(longest);
    } else {
      row = draw(static_cast<std::size_t>(m.rows()));
    }
    const Eigen::Index col = draw(static_cast<std::size_t>(m.cols()));

    const double saved = m(row, col);
    const LossWeights total_w{1.0, options.alpha, options.beta};
    m(row, col) = saved + options.step;
    const auto plus = evaluate_batch(probe, batch, total_w, batch_opts, false).loss;
    m(row, col) = saved - options.step;
    const auto minus = evaluate_batch(probe, batch, total_w, batch_opts, false).loss;
    m(row, col) = saved;

    const double h2 = 2.0 * options.step;
    const double numeric[4] = {(plus.l_c - minus.l_c) / h2,
                               (plus.l_extract - minus.l_extract) / h2,
                               (plus.l_balance - minus.l_balance) / h2,
                               (plus.total - minus.total) / h2};
    for (std::size_t k = 0; k < terms.size(); ++k) {
      const double a = (*tensors_of(std::as_const(analytic[k]))[t])(row, col);
      const double err = relative_error(a, numeric[k]);
      auto& worst = report.max_relative_error[terms[k].first];
      worst = std::max(worst, err);
      if (err > options.tolerance) {
        report.failures.push_back({terms[k].first, names[t], row, col, a, numeric[k], err});
      }
    }
  }
  return report;
}

}  // namespace unitmatch
