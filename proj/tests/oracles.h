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

// Straightforward reference implementations used as test oracles. They
// share no code with the library beyond plain data types.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace unitmatch::oracle {

// Okapi BM25 of `query` against `units[target]`, statistics over `units`.
inline double bm25(const std::vector<int>& query, const std::vector<std::vector<int>>& units,
                   std::size_t target, double k1 = 0.9, double b = 0.4) {
  const double n = static_cast<double>(units.size());
  double total_len = 0;
  for (const auto& u : units) total_len += static_cast<double>(u.size());
  const double avgdl = total_len / n;
  const auto& doc = units[target];
  std::set<int> terms;
  for (int t : query) {
    if (t > 1) terms.insert(t);  // skip [CLS]=0 and [UNK]=1
  }
  double score = 0;
  for (int t : terms) {
    double tf = 0;
    for (int x : doc) tf += (x == t);
    if (tf == 0) continue;
    double df = 0;
    for (const auto& u : units) df += std::count(u.begin(), u.end(), t) > 0;
    const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    const double dl = static_cast<double>(doc.size());
    score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl));
  }
  return score;
}

inline std::size_t argmax_first(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

// DCG with gain 2^rel - 1 and log2(rank + 1) discount.
inline double ndcg(const std::vector<std::string>& ranking,
                   const std::map<std::string, int>& judged, std::size_t k) {
  double dcg = 0;
  for (std::size_t r = 0; r < ranking.size() && r < k; ++r) {
    const auto it = judged.find(ranking[r]);
    const int rel = it == judged.end() ? 0 : it->second;
    dcg += (std::pow(2.0, rel) - 1) / std::log2(static_cast<double>(r) + 2);
  }
  std::vector<int> rels;
  for (const auto& [id, rel] : judged) rels.push_back(rel);
  std::sort(rels.rbegin(), rels.rend());
  double idcg = 0;
  for (std::size_t r = 0; r < rels.size() && r < k; ++r) {
    idcg += (std::pow(2.0, rels[r]) - 1) / std::log2(static_cast<double>(r) + 2);
  }
  return idcg == 0 ? 0 : dcg / idcg;
}

inline bool hit(const std::vector<std::string>& ranking,
                const std::map<std::string, int>& judged, std::size_t k) {
  for (std::size_t r = 0; r < ranking.size() && r < k; ++r) {
    const auto it = judged.find(ranking[r]);
    if (it != judged.end() && it->second > 0) return true;
  }
  return false;
}

// Phi(x) by composite Simpson integration of the normal density.
inline double normal_cdf(double x) {
  const double lo = -12.0;
  const int n = 20000;
  const double h = (x - lo) / n;
  auto pdf = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2 * M_PI); };
  double s = pdf(lo) + pdf(x);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * pdf(lo + i * h);
  return s * h / 3;
}

}  // namespace unitmatch::oracle
