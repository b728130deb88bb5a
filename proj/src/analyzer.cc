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

#include "unitmatch/analyzer.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

#include "unitmatch/error.h"
#include "unitmatch/trainer.h"

namespace unitmatch {

namespace {

struct PairView {
  Vector query;
  Vector passage;
  Matrix units;
};

PairView view_of(const EncoderParams& params, const TrainingPair& pair) {
  const Matrix zq = encode(params, pair.query->tokens);
  const Matrix zp = encode(params, pair.positive->tokens);
  return {text_representation(zq), text_representation(zp),
          unit_embeddings(zp, std::span(pair.positive->units))};
}

void append_row(std::ostream& out, const std::string& id, const std::string& domain,
                const char* kind, const Vector& v) {
  out << id << '\t' << domain << '\t' << kind;
  char buf[64];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v(i));
    out << '\t' << std::string_view(buf, static_cast<std::size_t>(end - buf));
  }
  out << '\n';
}

}  // namespace

double distribution_variance(const Vector& probs) {
  if (probs.size() == 0) return 0.0;
  const double mean = probs.mean();
  return (probs.array() - mean).square().mean();
}

double mean_abs_cosine(const Matrix& units, std::size_t* excluded) {
  std::vector<Vector> rows;
  std::size_t dropped = 0;
  for (Eigen::Index i = 0; i < units.rows(); ++i) {
    const double norm = units.row(i).norm();
    if (norm == 0.0) {
      ++dropped;
      continue;
    }
    rows.push_back(units.row(i).transpose() / norm);
  }
  if (excluded != nullptr) *excluded = dropped;
  if (rows.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      sum += std::min(1.0, std::abs(rows[i].dot(rows[j])));
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

std::size_t extracted_unit(const Vector& match, const Matrix& units) {
  const Vector logits = units * match;
  return argmax_lowest(std::span<const double>(logits.data(), static_cast<std::size_t>(logits.size())));
}

double unit_balance_variance(const EncoderParams& params,
                             std::span<const TrainingPair> pairs, std::size_t threads) {
  std::vector<double> values(pairs.size(), std::numeric_limits<double>::quiet_NaN());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    if (pairs[i].positive->units.size() < 2) return;
    const Matrix zp = encode(params, pairs[i].positive->tokens);
    const Matrix units = unit_embeddings(zp, std::span(pairs[i].positive->units));
    values[i] = distribution_variance(unit_distribution(text_representation(zp), units).probs);
  });
  double sum = 0.0;
  std::size_t count = 0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    sum += v;
    ++count;
  }
  if (count == 0) throw DataError("no pair with at least two units to measure balance");
  return sum / static_cast<double>(count);
}

double emu_accuracy(const EncoderParams& params, std::span<const TrainingPair> pairs,
                    std::size_t threads) {
  if (pairs.empty()) throw DataError("empty sample for unit extraction accuracy");
  std::vector<int> hits(pairs.size(), 0);
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const auto view = view_of(params, pairs[i]);
    const Vector match = matching_representation(view.query, view.passage);
    hits[i] = extracted_unit(match, view.units) == pairs[i].label ? 1 : 0;
  });
  std::size_t total = 0;
  for (int h : hits) total += static_cast<std::size_t>(h);
  return static_cast<double>(total) / static_cast<double>(pairs.size());
}

DispersionResult unit_dispersion(const EncoderParams& params,
                                 std::span<const Passage* const> passages,
                                 std::size_t threads) {
  std::vector<double> values(passages.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<std::size_t> excluded(passages.size(), 0);
  parallel_for(passages.size(), threads, [&](std::size_t i) {
    if (passages[i]->units.size() < 2) return;
    const Matrix z = encode(params, passages[i]->tokens);
    values[i] = mean_abs_cosine(unit_embeddings(z, std::span(passages[i]->units)), &excluded[i]);
  });
  DispersionResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    r.excluded_units += excluded[i];
    if (std::isnan(values[i])) continue;
    sum += values[i];
    ++r.passages;
  }
  if (r.excluded_units > 0) {
    std::cerr << "warning: " << r.excluded_units
              << " zero-norm unit embeddings left out of the dispersion\n";
  }
  if (r.passages == 0) throw DataError("no passage with at least two units to measure dispersion");
  r.mean_abs_cosine = sum / static_cast<double>(r.passages);
  return r;
}

nlohmann::json DiagnosticsReport::to_json() const {
  return {{"unit_balance_variance", balance_variance},
          {"emu_accuracy", emu_accuracy},
          {"unit_dispersion", dispersion},
          {"samples", samples},
          {"balance_samples", balance_samples},
          {"dispersion_samples", dispersion_samples},
          {"excluded_units", excluded_units}};
}

DiagnosticsReport analyze(const EncoderParams& params, std::span<const TrainingPair> pairs,
                          std::size_t sample_size, std::uint64_t seed, std::size_t threads) {
  std::vector<TrainingPair> sample;
  if (pairs.size() > sample_size) {
    const auto order = epoch_order(pairs.size(), seed, 0);
    for (std::size_t i = 0; i < sample_size; ++i) sample.push_back(pairs[order[i]]);
  } else {
    sample.assign(pairs.begin(), pairs.end());
  }
  DiagnosticsReport report;
  report.samples = sample.size();
  for (const auto& p : sample) report.balance_samples += p.positive->units.size() >= 2 ? 1 : 0;
  report.balance_variance = unit_balance_variance(params, sample, threads);
  report.emu_accuracy = emu_accuracy(params, sample, threads);
  std::vector<const Passage*> passages;
  for (const auto& p : sample) passages.push_back(p.positive);
  const auto dispersion = unit_dispersion(params, passages, threads);
  report.dispersion = dispersion.mean_abs_cosine;
  report.dispersion_samples = dispersion.passages;
  report.excluded_units = dispersion.excluded_units;
  return report;
}

EmbeddingKind parse_embedding_kind(const std::string& name) {
  if (name == "text") return EmbeddingKind::kText;
  if (name == "matching") return EmbeddingKind::kMatching;
  if (name == "unit") return EmbeddingKind::kUnit;
  throw UsageError("embedding kind must be text, matching or unit");
}

void export_embeddings(const std::filesystem::path& path, const EncoderParams& params,
                       std::span<const ExportSource> sources,
                       const std::set<EmbeddingKind>& kinds) {
  if (kinds.contains(EmbeddingKind::kMatching)) {
    for (const auto& s : sources) {
      if (s.pairs.empty()) {
        throw DataError("matching embeddings need paired queries for domain '" + s.domain + "'");
      }
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& s : sources) {
    if (kinds.contains(EmbeddingKind::kText) || kinds.contains(EmbeddingKind::kUnit)) {
      for (const auto& p : s.passages) {
        const Matrix z = encode(params, p.tokens);
        if (kinds.contains(EmbeddingKind::kText)) {
          append_row(out, p.id, s.domain, "text", text_representation(z));
        }
        if (kinds.contains(EmbeddingKind::kUnit)) {
          const Matrix units = unit_embeddings(z, std::span(p.units));
          for (Eigen::Index i = 0; i < units.rows(); ++i) {
            append_row(out, p.id + "#" + std::to_string(i), s.domain, "unit",
                       units.row(i).transpose());
          }
        }
      }
    }
    if (kinds.contains(EmbeddingKind::kMatching)) {
      for (const auto& pair : s.pairs) {
        const auto view = view_of(params, pair);
        append_row(out, pair.query->id + "|" + pair.positive->id, s.domain, "matching",
                   matching_representation(view.query, view.passage));
      }
    }
  }
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace unitmatch
