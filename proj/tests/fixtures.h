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

// Small synthetic training sets shared by the tests.
#pragma once

#include "unitmatch/annotator.h"
#include "unitmatch/synth.h"
#include "unitmatch/trainer.h"

namespace unitmatch::testing {

struct Fixture {
  SynthDataset dataset;
  std::vector<AnnotatedPair> annotations;
  TrainingData data;
};

inline Fixture make_fixture(std::size_t queries, std::uint64_t seed,
                            std::size_t distractors = 3) {
  SynthSpec spec;
  spec.queries = queries;
  spec.heldout = 0;
  spec.distractors = distractors;
  spec.signal_vocab = 3 * queries + 10;
  spec.distractor_vocab = 30;
  spec.seed = seed;
  Fixture f;
  f.dataset = synthesize(spec);
  const auto vocab = Vocabulary::build(texts_of(f.dataset.corpus));
  std::vector<Passage> passages;
  for (const auto& d : f.dataset.corpus) passages.push_back(make_passage(d, vocab));
  std::vector<Query> qs;
  for (const auto& d : f.dataset.queries) qs.push_back(make_query(d, vocab));
  f.annotations = annotate_dataset(qs, passages, f.dataset.train_qrels, {});
  f.data = build_training_data(f.dataset.corpus, f.dataset.queries, f.annotations);
  return f;
}

inline EncoderConfig fixture_encoder(const Fixture& f, std::size_t dim = 8,
                                     std::size_t blocks = 1) {
  return {f.data.vocab().size(), dim, blocks, kDefaultMaxLen};
}

}  // namespace unitmatch::testing
