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

#include "unitmatch/cli.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "unitmatch/analyzer.h"
#include "unitmatch/annotator.h"
#include "unitmatch/checkpoint.h"
#include "unitmatch/corpus.h"
#include "unitmatch/error.h"
#include "unitmatch/evaluator.h"
#include "unitmatch/synth.h"
#include "unitmatch/trainer.h"

namespace unitmatch {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct GlobalOptions {
  std::uint64_t seed = 42;
  std::size_t threads = 1;
  std::string precision = "f64";
  bool seed_given = false;
  bool threads_given = false;
};

std::ofstream open_output(const fs::path& path, bool append = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void write_json(const std::string& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---- segment ---------------------------------------------------------------

struct SegmentArgs {
  std::string corpus;
  std::string out;
  std::size_t max_len = kDefaultMaxLen;
};

void segment(const SegmentArgs& a) {
  const auto corpus = load_corpus(a.corpus);
  index_by_id<Document>(corpus);
  const auto vocab = Vocabulary::build(texts_of(corpus));
  std::ostringstream buf;
  for (const auto& doc : corpus) {
    const auto passage = make_passage(doc, vocab, a.max_len);
    json units = json::array();
    for (const auto& u : passage.units) {
      units.push_back({{"index", u.index},
                       {"char", {u.char_start, u.char_end}},
                       {"tokens", {u.tok_start, u.tok_end}},
                       {"text", doc.text.substr(u.char_start, u.char_end - u.char_start)}});
    }
    buf << json{{"_id", doc.id}, {"units", units}}.dump() << '\n';
  }
  if (a.out.empty() || a.out == "-") {
    std::cout << buf.str();
  } else {
    open_output(a.out) << buf.str();
  }
}

// ---- annotate --------------------------------------------------------------

struct AnnotateArgs {
  std::string corpus, queries, qrels, out, reader;
  AnnotatorConfig config;
};

void annotate(const AnnotateArgs& a) {
  const auto corpus = load_corpus(a.corpus);
  const auto queries = load_queries(a.queries);
  const auto qrels = load_qrels(a.qrels);
  check_qrels(qrels, queries, corpus);

  const auto vocab = Vocabulary::build(texts_of(corpus));
  std::vector<Passage> passages;
  passages.reserve(corpus.size());
  for (const auto& d : corpus) passages.push_back(make_passage(d, vocab, a.config.max_len));
  std::vector<Query> tokenized;
  tokenized.reserve(queries.size());
  for (const auto& d : queries) tokenized.push_back(make_query(d, vocab, a.config.max_len));

  std::optional<ReaderTable> reader;
  if (!a.reader.empty()) reader = load_reader(a.reader);

  AnnotationSummary summary;
  const auto pairs = annotate_dataset(tokenized, passages, qrels, a.config,
                                      reader ? &*reader : nullptr, &summary);
  write_annotations(a.out, pairs);

  json hist = json::object();
  for (const auto& [label, count] : summary.label_histogram) hist[std::to_string(label)] = count;
  std::cerr << json{{"pairs", summary.pairs},
                    {"with_reader", summary.with_reader},
                    {"mean_units", summary.mean_units},
                    {"label_histogram", hist}}
                   .dump()
            << '\n';
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config, corpus, queries, annotations, out, resume, negatives;
};

void train(const TrainArgs& a, const GlobalOptions& g) {
  TrainConfig config = train_config_from_json(read_json_file(a.config));
  if (g.seed_given) config.seed = g.seed;
  if (g.threads_given) config.threads = g.threads;
  if (!a.negatives.empty()) config.negatives_file = a.negatives;
  config.validate();

  const auto corpus = load_corpus(a.corpus);
  const auto queries = load_queries(a.queries);
  const auto annotations = read_annotations(a.annotations);
  std::map<std::string, std::vector<std::string>> hard;
  if (!config.negatives_file.empty()) {
    hard = load_hard_negatives(config.negatives_file);
  } else if (config.negatives == NegativeMode::kFile) {
    throw UsageError("negatives mode 'file' needs --negatives or negatives_file");
  }

  std::optional<Checkpoint> resumed;
  if (!a.resume.empty()) resumed = load_checkpoint(a.resume);
  const auto data = build_training_data(corpus, queries, annotations, hard, config.max_len,
                                        resumed ? &resumed->vocab : nullptr);
  if (data.pairs().empty()) throw DataError("no training pairs in " + a.annotations);

  const EncoderConfig encoder{data.vocab().size(), config.dim, config.blocks, config.max_len};
  TrainState state;
  if (resumed) {
    if (!(resumed->params.config == encoder)) {
      throw DataError("checkpoint architecture does not match the training config");
    }
    state = from_checkpoint(*resumed);
  } else {
    state = initial_state(encoder, config.seed, config.init);
  }

  const fs::path out(a.out);
  fs::create_directories(out);
  write_json((out / "config.json").string(), to_json(config));

  const Trainer trainer(config, data.pairs());
  auto metrics = open_output(out / "metrics.jsonl", resumed.has_value());
  trainer.run(state, [&](const TrainState& s, const EpochLog& log) {
    metrics << to_json(log).dump() << '\n';
    metrics.flush();
    std::cerr << "epoch " << log.epoch << " step " << log.step << " loss "
              << log.mean.total << '\n';
    if (config.checkpoint_every > 0 && log.epoch % config.checkpoint_every == 0) {
      save_checkpoint(out / ("state-epoch" + std::to_string(log.epoch) + ".bin"),
                      to_checkpoint(s, data.vocab(), config, true));
    }
  });
  save_checkpoint(out / "state.bin", to_checkpoint(state, data.vocab(), config, true));
  save_checkpoint(out / "checkpoint.bin", to_checkpoint(state, data.vocab(), config, false));
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, corpus, queries, qrels, run, report, dataset, jaccard_corpus;
  std::size_t k = 10;
  std::size_t hit_k = 20;
};

void evaluate(const EvalArgs& a, const GlobalOptions& g) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  const auto corpus = load_corpus(a.corpus);
  const auto all_queries = load_queries(a.queries);
  const auto qrels = load_qrels(a.qrels);
  check_qrels(qrels, all_queries, corpus);

  std::vector<Document> queries;
  for (const auto& q : all_queries) {
    if (!qrels.judgments(q.id).empty()) queries.push_back(q);
  }
  const EncodeOptions options{ckpt.params.config.max_len, g.threads,
                              parse_precision(g.precision)};
  const auto encoded_corpus = encode_texts(ckpt.params, ckpt.vocab, corpus, options);
  const auto encoded_queries = encode_texts(ckpt.params, ckpt.vocab, queries, options);
  const std::size_t depth = std::max(a.k, a.hit_k);
  const auto run = retrieve_all(encoded_queries, encoded_corpus, depth, g.threads);
  if (!a.run.empty()) write_run(a.run, run);

  MetricsReport report;
  report.ndcg_cutoff = a.k;
  report.hit_cutoff = a.hit_k;
  std::string name = a.dataset;
  if (name.empty()) {
    const fs::path p = fs::absolute(a.corpus);
    name = p.parent_path().filename().string();
    if (name.empty()) name = "dataset";
  }
  report.datasets[name] = {ndcg_at_k(run, qrels, a.k), top_k_hit(run, qrels, a.hit_k),
                           judged_query_count(run, qrels)};
  // File name only, so that reports do not depend on where a run lives.
  report.config = {{"checkpoint", fs::path(a.checkpoint).filename().string()},
                   {"precision", g.precision}};
  if (ckpt.metadata.contains("train_config")) {
    report.config["train_config"] = ckpt.metadata["train_config"];
  }
  if (!a.jaccard_corpus.empty()) {
    const auto other = load_corpus(a.jaccard_corpus);
    report.config["jaccard_percent"] =
        jaccard_unigrams(texts_of(other), texts_of(corpus));
  }
  write_json(a.report, report.to_json());
}

// ---- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
  std::string checkpoint, annotations, corpus, queries, exports, report;
  std::string domain = "default";
  std::vector<std::string> kinds{"text", "matching", "unit"};
  std::size_t sample = 10000;
};

void analyze_command(const AnalyzeArgs& a, const GlobalOptions& g) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  const auto corpus = load_corpus(a.corpus);
  const auto queries = load_queries(a.queries);
  const auto annotations = read_annotations(a.annotations);
  const auto data = build_training_data(corpus, queries, annotations, {},
                                        ckpt.params.config.max_len, &ckpt.vocab);
  if (data.pairs().empty()) throw DataError("no annotated pairs in " + a.annotations);

  const auto report = analyze(ckpt.params, data.pairs(), a.sample, g.seed, g.threads);
  write_json(a.report, report.to_json());

  if (!a.exports.empty()) {
    std::set<EmbeddingKind> kinds;
    for (const auto& k : a.kinds) kinds.insert(parse_embedding_kind(k));
    // Only passages that take part in an annotated pair are exported.
    std::set<const Passage*> used;
    for (const auto& p : data.pairs()) used.insert(p.positive);
    std::vector<Passage> passages;
    for (const auto& p : data.passages()) {
      if (used.contains(&p)) passages.push_back(p);
    }
    const ExportSource source{a.domain, passages, data.pairs()};
    export_embeddings(a.exports, ckpt.params, std::span(&source, 1), kinds);
  }
}

// ---- synth -----------------------------------------------------------------

void synth(const std::string& out, SynthSpec spec, const GlobalOptions& g) {
  spec.seed = g.seed;
  write_dataset(out, synthesize(spec));
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"unitmatch: dense retrieval with unit-level auxiliary objectives"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--precision", g.precision, "Inference precision")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();

  SegmentArgs seg;
  auto* seg_cmd = app.add_subcommand("segment", "Split passages into sentence units");
  seg_cmd->add_option("--corpus", seg.corpus, "corpus.jsonl")->required();
  seg_cmd->add_option("--out", seg.out, "Output JSONL (default stdout)");
  seg_cmd->add_option("--max-len", seg.max_len, "Token budget including [CLS]")
      ->capture_default_str();

  AnnotateArgs ann;
  auto* ann_cmd = app.add_subcommand("annotate", "Label the essential unit of each positive pair");
  ann_cmd->add_option("--corpus", ann.corpus, "corpus.jsonl")->required();
  ann_cmd->add_option("--queries", ann.queries, "queries.jsonl")->required();
  ann_cmd->add_option("--qrels", ann.qrels, "qrels TSV")->required();
  ann_cmd->add_option("--out", ann.out, "annotations.jsonl")->required();
  ann_cmd->add_option("--delta", ann.config.delta, "Reader weight")->capture_default_str();
  ann_cmd->add_option("--k1", ann.config.bm25.k1, "BM25 k1")->capture_default_str();
  ann_cmd->add_option("--b", ann.config.bm25.b, "BM25 b")->capture_default_str();
  ann_cmd->add_option("--reader", ann.reader, "reader.jsonl with token distributions");
  ann_cmd->add_option("--max-len", ann.config.max_len, "Token budget including [CLS]")
      ->capture_default_str();

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train the dual encoder");
  tr_cmd->add_option("--config", tr.config, "config.json")->required();
  tr_cmd->add_option("--corpus", tr.corpus, "corpus.jsonl")->required();
  tr_cmd->add_option("--queries", tr.queries, "queries.jsonl")->required();
  tr_cmd->add_option("--annotations", tr.annotations, "annotations.jsonl")->required();
  tr_cmd->add_option("--out", tr.out, "Output directory")->required();
  tr_cmd->add_option("--resume", tr.resume, "State checkpoint to continue from");
  tr_cmd->add_option("--negatives", tr.negatives, "negatives.jsonl");

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "Retrieve and score against qrels");
  ev_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint.bin")->required();
  ev_cmd->add_option("--corpus", ev.corpus, "corpus.jsonl")->required();
  ev_cmd->add_option("--queries", ev.queries, "queries.jsonl")->required();
  ev_cmd->add_option("--qrels", ev.qrels, "qrels TSV")->required();
  ev_cmd->add_option("--k", ev.k, "nDCG cutoff")->check(CLI::PositiveNumber)->capture_default_str();
  ev_cmd->add_option("--hit-k", ev.hit_k, "Top-k hit cutoff")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ev_cmd->add_option("--run", ev.run, "Run file to write (TSV)");
  ev_cmd->add_option("--report", ev.report, "Report JSON (default stdout)");
  ev_cmd->add_option("--dataset", ev.dataset, "Dataset name in the report");
  ev_cmd->add_option("--jaccard-corpus", ev.jaccard_corpus,
                     "Training corpus for the vocabulary-overlap figure");

  AnalyzeArgs an;
  auto* an_cmd = app.add_subcommand("analyze", "Unit balance, extractability and dispersion");
  an_cmd->add_option("--checkpoint", an.checkpoint, "checkpoint.bin")->required();
  an_cmd->add_option("--annotations", an.annotations, "annotations.jsonl")->required();
  an_cmd->add_option("--corpus", an.corpus, "corpus.jsonl")->required();
  an_cmd->add_option("--queries", an.queries, "queries.jsonl")->required();
  an_cmd->add_option("--sample", an.sample, "Pairs sampled")->capture_default_str();
  an_cmd->add_option("--report", an.report, "Report JSON (default stdout)");
  an_cmd->add_option("--export", an.exports, "Embeddings TSV to write");
  an_cmd->add_option("--kinds", an.kinds, "Exported rows: text, matching, unit")
      ->delimiter(',')
      ->check(CLI::IsMember({"text", "matching", "unit"}))
      ->capture_default_str();
  an_cmd->add_option("--domain", an.domain, "Domain tag for exported rows")
      ->capture_default_str();

  SynthSpec spec;
  std::string synth_out;
  auto* sy_cmd = app.add_subcommand("synth", "Write a synthetic dataset with gold unit labels");
  sy_cmd->add_option("--out", synth_out, "Output directory")->required();
  sy_cmd->add_option("--queries", spec.queries, "Queries (one passage each)")
      ->capture_default_str();
  sy_cmd->add_option("--heldout", spec.heldout, "Queries held out to the test qrels")
      ->capture_default_str();
  sy_cmd->add_option("--distractors", spec.distractors, "Distractor sentences per passage")
      ->capture_default_str();
  sy_cmd->add_option("--signal-vocab", spec.signal_vocab, "Signal vocabulary size")
      ->capture_default_str();
  sy_cmd->add_option("--distractor-vocab", spec.distractor_vocab,
                     "Distractor vocabulary size")
      ->capture_default_str();

  std::vector<std::string> rest(args.rbegin(), args.rend());
  if (!rest.empty()) rest.pop_back();  // program name
  try {
    app.parse(rest);
    g.seed_given = app.count("--seed") > 0;
    g.threads_given = app.count("--threads") > 0;
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n"
              << "run with --help for usage\n";
    return 1;
  }

  try {
    if (*seg_cmd) segment(seg);
    if (*ann_cmd) annotate(ann);
    if (*tr_cmd) train(tr, g);
    if (*ev_cmd) evaluate(ev, g);
    if (*an_cmd) analyze_command(an, g);
    if (*sy_cmd) synth(synth_out, spec, g);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    // DataError, NumericError and I/O failures all come from the inputs.
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace unitmatch
