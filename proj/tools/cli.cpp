// Copyright 2026 The gpgnn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gpgnn/checkpoint.hpp"
#include "gpgnn/corpus.hpp"
#include "gpgnn/embeddings.hpp"
#include "gpgnn/error.hpp"
#include "gpgnn/evaluation.hpp"
#include "gpgnn/model.hpp"
#include "gpgnn/random.hpp"
#include "gpgnn/synth.hpp"
#include "gpgnn/training.hpp"

namespace gpgnn::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

// Inputs are recorded by role so that manifests do not depend on where the
// files live.
class Manifest {
 public:
  explicit Manifest(std::string command) { doc_["command"] = std::move(command); }

  void input(const std::string& role, const fs::path& path) {
    doc_["inputs"][role] = {{"file", path.filename().string()},
                            {"sha256", file_sha256(path)}};
  }
  void config(const std::string& config_json) {
    doc_["config"] = json::parse(config_json);
    doc_["config_sha256"] = sha256_hex(config_json);
  }
  void seed(std::uint64_t seed) {
    doc_["seed"] = seed;
    for (const char* stream : {"init", "shuffle", "dropout"}) {
      doc_["sub_seeds"][stream] = derive_seed(seed, stream);
    }
  }
  void output(const std::string& name) { doc_["outputs"].push_back(name); }
  json& operator[](const std::string& key) { return doc_[key]; }

  void write(const fs::path& dir) {
    doc_["version"] = kVersion;
    write_text(dir / "manifest.json", doc_.dump(2) + "\n");
  }

 private:
  json doc_ = json::object();
};

std::vector<corpus::Sentence> load_corpus(const fs::path& path) {
  corpus::ParseResult parsed = corpus::parse_corpus_file(path);
  if (!parsed.errors.empty()) {
    const auto& e = parsed.errors.front();
    throw DataError(path.string() + ":" + std::to_string(e.line) + ": " + e.message +
                    (parsed.errors.size() > 1
                         ? " (and " + std::to_string(parsed.errors.size() - 1) + " more)"
                         : ""));
  }
  return std::move(parsed.sentences);
}

std::vector<model::EncodedSentence> encode_all(std::span<const corpus::Sentence> sentences,
                                               const corpus::Vocabulary& vocab,
                                               const RelationVocab& relations) {
  std::vector<model::EncodedSentence> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(model::encode_sentence(s, vocab, relations));
  return out;
}

struct LoadedModel {
  train::TrainConfig config;
  corpus::Vocabulary vocab;
  RelationVocab relations;
  model::GpGnnModel model;
};

LoadedModel load_model(const fs::path& path) {
  const nn::Checkpoint ck = nn::read_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ck.meta_json);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": bad checkpoint metadata: " + e.what());
  }
  if (!meta.contains("config") || !meta.contains("vocab") || !meta.contains("relations")) {
    throw DataError(path.string() + ": checkpoint lacks config, vocab or relations");
  }
  auto config = train::TrainConfig::from_json(meta["config"].dump());
  corpus::Vocabulary vocab(meta["vocab"].get<std::vector<std::string>>());
  InverseMap inverses;
  if (meta.contains("inverses")) inverses = meta["inverses"].get<InverseMap>();
  RelationVocab relations(meta["relations"].get<std::vector<std::string>>(), inverses);
  Rng rng(derive_seed(config.seed, "init"));
  auto m = model::GpGnnModel::create(config.model_config(vocab.size(), relations.size()), rng);
  nn::restore(m.store(), ck);
  return {std::move(config), std::move(vocab), std::move(relations), std::move(m)};
}

// ---------------------------------------------------------------------------

struct PreprocessArgs {
  std::string train, valid, test, inverse, relations, out;
  bool dense = false;
};

int run_preprocess(const PreprocessArgs& a, std::ostream& out) {
  fs::create_directories(a.out);
  Manifest manifest("preprocess");
  InverseMap inverses;
  if (!a.inverse.empty()) {
    inverses = load_inverse_map(a.inverse);
    manifest.input("inverse", a.inverse);
  }
  std::optional<RelationVocab> fixed;
  if (!a.relations.empty()) {
    fixed = RelationVocab::load(a.relations, inverses);
    manifest.input("relations", a.relations);
  }
  std::map<std::string, std::vector<corpus::Sentence>> splits;
  for (const auto& [name, path] : {std::pair{"train", a.train}, std::pair{"valid", a.valid},
                                   std::pair{"test", a.test}}) {
    if (path.empty()) continue;
    manifest.input(name, path);
    const auto raw = load_corpus(path);
    corpus::NormalizationStats stats;
    splits[name] = corpus::normalize_dataset(raw, inverses, fixed ? &*fixed : nullptr, stats);
    manifest["counts"][name] = {{"input", stats.input},
                                {"kept", stats.kept},
                                {"skipped", stats.skipped},
                                {"skipped_total", stats.skipped_total()},
                                {"merged_entities", stats.merged_entities},
                                {"dropped_self_loops", stats.dropped_self_loops},
                                {"dropped_conflicts", stats.dropped_conflicts},
                                {"added_reversed", stats.added_reversed},
                                {"added_na", stats.added_na}};
    out << name << ": kept " << stats.kept << " of " << stats.input << ", skipped "
        << stats.skipped_total() << "\n";
  }
  std::vector<corpus::Sentence> all;
  for (const auto& [name, sentences] : splits) {
    corpus::write_corpus_file(fs::path(a.out) / (name + ".jsonl"), sentences);
    manifest.output(name + ".jsonl");
    all.insert(all.end(), sentences.begin(), sentences.end());
  }
  const RelationVocab relations = fixed ? *fixed : corpus::relation_vocab_from(all, inverses);
  write_text(fs::path(a.out) / "relations.json", relations.to_json() + "\n");
  write_text(fs::path(a.out) / "inverse.json", inverse_map_json(close_inverse_map(inverses)) + "\n");
  const auto vocab = corpus::Vocabulary::build(splits["train"]);
  write_text(fs::path(a.out) / "vocab.json", json(vocab.tokens()).dump() + "\n");
  for (const char* name : {"relations.json", "inverse.json", "vocab.json"}) manifest.output(name);
  if (a.dense) {
    const std::string source = splits.contains("test") ? "test" : "train";
    const auto split = corpus::split_dense_subset(splits[source]);
    corpus::write_corpus_file(fs::path(a.out) / (source + "_dense.jsonl"), split.dense);
    corpus::write_corpus_file(fs::path(a.out) / (source + "_rest.jsonl"), split.rest);
    manifest.output(source + "_dense.jsonl");
    manifest.output(source + "_rest.jsonl");
    manifest["counts"]["dense"] = {{"source", source},
                                   {"dense", split.dense.size()},
                                   {"rest", split.rest.size()}};
  }
  manifest.write(a.out);
  return kSuccess;
}

struct SynthArgs {
  std::string spec, out;
  std::optional<std::uint64_t> seed;
};

int run_synth(const SynthArgs& a, std::ostream& out) {
  Manifest manifest("synth");
  synth::SynthSpec spec;
  if (!a.spec.empty()) {
    spec = synth::SynthSpec::from_json(read_text(a.spec));
    manifest.input("spec", a.spec);
  }
  if (a.seed) spec.seed = *a.seed;
  const auto corpus = synth::synthesize_multihop_corpus(spec);
  synth::write_synth_corpus(corpus, a.out);
  manifest.config(spec.to_json());
  manifest["seed"] = spec.seed;
  manifest["counts"] = {{"train", corpus.train.size()},
                        {"valid", corpus.valid.size()},
                        {"test", corpus.test.size()}};
  for (const char* name : {"train.jsonl", "valid.jsonl", "test.jsonl", "inverse.json",
                           "relations.json", "implied.json"}) {
    manifest.output(name);
  }
  manifest.write(a.out);
  out << "wrote " << corpus.train.size() << "/" << corpus.valid.size() << "/"
      << corpus.test.size() << " sentences to " << a.out << "\n";
  return kSuccess;
}

struct TrainArgs {
  std::string config, data, train, valid, relations, inverse, embeddings, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> layers, workers;
};

int run_train(TrainArgs a, std::ostream& out) {
  if (!a.data.empty()) {
    const fs::path dir(a.data);
    auto fill = [&](std::string& target, const char* name) {
      if (target.empty() && fs::exists(dir / name)) target = (dir / name).string();
    };
    fill(a.train, "train.jsonl");
    fill(a.valid, "valid.jsonl");
    fill(a.relations, "relations.json");
    fill(a.inverse, "inverse.json");
  }
  if (a.train.empty()) throw ConfigError("train: no training data (use --data or --train)");

  Manifest manifest("train");
  train::TrainConfig config;
  if (!a.config.empty()) {
    config = train::TrainConfig::from_json(read_text(a.config));
    manifest.input("config", a.config);
  }
  if (a.seed) config.seed = *a.seed;
  if (a.layers) {
    config.layers = *a.layers;
    config.node_dim = 0;
  }
  if (a.workers) config.workers = *a.workers;
  config.validate();
  manifest.config(config.to_json());
  manifest.seed(config.seed);

  InverseMap inverses;
  if (!a.inverse.empty()) {
    inverses = load_inverse_map(a.inverse);
    manifest.input("inverse", a.inverse);
  }
  manifest.input("train", a.train);
  const auto train_raw = load_corpus(a.train);
  std::vector<corpus::Sentence> valid_raw;
  if (!a.valid.empty()) {
    manifest.input("valid", a.valid);
    valid_raw = load_corpus(a.valid);
  }
  RelationVocab relations;
  if (!a.relations.empty()) {
    manifest.input("relations", a.relations);
    relations = RelationVocab::load(a.relations, inverses);
  } else {
    std::vector<corpus::Sentence> all = train_raw;
    all.insert(all.end(), valid_raw.begin(), valid_raw.end());
    relations = corpus::relation_vocab_from(all, inverses);
  }
  const auto vocab = corpus::Vocabulary::build(train_raw);
  const auto train_set = encode_all(train_raw, vocab, relations);
  const auto valid_set = encode_all(valid_raw, vocab, relations);

  Rng init(derive_seed(config.seed, "init"));
  auto m = model::GpGnnModel::create(config.model_config(vocab.size(), relations.size()), init);
  if (!a.embeddings.empty()) {
    if (config.word_dim != corpus::kWordDim) {
      throw ConfigError("pretrained vectors need word_dim " + std::to_string(corpus::kWordDim));
    }
    manifest.input("embeddings", a.embeddings);
    Rng unk(derive_seed(config.seed, "embeddings"));
    corpus::EmbeddingLoadReport report;
    const auto table = corpus::load_embedding_file(a.embeddings, vocab, unk, &report);
    m.set_word_vectors(table);
    manifest["counts"]["embeddings"] = {{"found", report.found},
                                        {"missing", report.missing},
                                        {"bad_lines", report.errors.size()}};
    if (report.zero_overlap) out << "warning: no vocabulary word has a pretrained vector\n";
  }

  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::ofstream log(dir / "run_log.jsonl", std::ios::binary);
  if (!log) throw DataError("cannot write " + (dir / "run_log.jsonl").string());
  train::TrainHooks hooks;
  hooks.log = [&](const std::string& line) { log << line << '\n'; };
  hooks.checkpoint_meta = json{{"config", json::parse(config.to_json())},
                               {"vocab", vocab.tokens()},
                               {"relations", relations.names()},
                               {"inverses", relations.inverses()}}
                              .dump();
  const auto result = train::run_training(config, m, train_set, valid_set, hooks);
  log.close();
  nn::write_checkpoint(dir / "model.ckpt", result.best);
  manifest.output("model.ckpt");
  manifest.output("run_log.jsonl");
  manifest["counts"]["train_sentences"] = train_set.size();
  manifest["counts"]["valid_sentences"] = valid_set.size();
  manifest["result"] = {{"best_epoch", result.best_epoch},
                        {"epochs", result.epochs.size()},
                        {"stop_reason", result.stop_reason}};
  manifest.write(dir);
  out << "trained " << result.epochs.size() << " epochs, best epoch " << result.best_epoch
      << " (" << result.stop_reason << ")\n";
  return kSuccess;
}

struct EvalArgs {
  std::string checkpoint, data, out, population = "predictions";
  double na_floor = 0.0;
  bool dense = false;
};

int run_eval(const EvalArgs& a, std::ostream& out) {
  Manifest manifest("eval");
  manifest.input("checkpoint", a.checkpoint);
  manifest.input("data", a.data);
  LoadedModel loaded = load_model(a.checkpoint);
  auto sentences = load_corpus(a.data);
  if (a.dense) sentences = corpus::split_dense_subset(sentences).dense;
  if (sentences.empty()) throw DataError("eval: no sentences to evaluate");
  const auto encoded = encode_all(sentences, loaded.vocab, loaded.relations);
  const auto records = eval::predict_records(loaded.model, encoded);

  eval::EvalOptions options;
  options.population = eval::parse_population(a.population);
  options.na_floor = a.na_floor;
  const fs::path dir(a.out);
  fs::create_directories(dir);
  const std::string report = eval::metrics_report_json(records, options);
  write_text(dir / "metrics.json", report + "\n");
  {
    std::ofstream csv(dir / "pr.csv", std::ios::binary);
    const auto gold = eval::gold_facts(records);
    const auto ranked = eval::rank_facts(eval::score_bags(records), gold, options.na_floor);
    if (gold.empty()) {
      eval::write_pr_csv(csv, {});
    } else {
      eval::write_pr_csv(csv, eval::pr_curve_points(ranked, gold.size()));
    }
  }
  {
    std::ofstream pred(dir / "predictions.jsonl", std::ios::binary);
    eval::write_predictions(pred, records, loaded.relations);
  }
  for (const char* name : {"metrics.json", "pr.csv", "predictions.jsonl"}) manifest.output(name);
  manifest["counts"] = {{"sentences", sentences.size()}, {"records", records.size()}};
  manifest["dense_only"] = a.dense;
  manifest.write(dir);
  out << report << "\n";
  return kSuccess;
}

struct PredictArgs {
  std::string checkpoint, data, out;
};

int run_predict(const PredictArgs& a, std::ostream& out) {
  Manifest manifest("predict");
  manifest.input("checkpoint", a.checkpoint);
  manifest.input("data", a.data);
  LoadedModel loaded = load_model(a.checkpoint);
  const auto sentences = load_corpus(a.data);
  std::vector<model::EncodedSentence> encoded;
  std::size_t skipped = 0;
  for (const auto& s : sentences) {
    const std::size_t m = s.entity_count();
    if (m < 2 || m > corpus::kMaxEntities) {
      ++skipped;
      continue;
    }
    try {
      encoded.push_back(model::encode_sentence(s, loaded.vocab, loaded.relations, false));
    } catch (const DataError&) {
      ++skipped;
    }
  }
  const auto records = eval::predict_records(loaded.model, encoded);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  {
    std::ofstream pred(dir / "predictions.jsonl", std::ios::binary);
    eval::write_predictions(pred, records, loaded.relations);
  }
  manifest.output("predictions.jsonl");
  manifest["counts"] = {{"sentences", sentences.size()},
                        {"skipped", skipped},
                        {"records", records.size()}};
  manifest.write(dir);
  out << "wrote " << records.size() << " predictions (" << skipped << " sentences skipped)\n";
  return kSuccess;
}

int run_gradcheck(std::uint64_t seed, std::size_t layers, std::ostream& out) {
  auto toy = model::make_toy_problem(seed, layers);
  const auto report = model::check_model_gradients(toy.model, toy.sentence);
  out << "gradcheck: " << report.analytic.size() << " coordinates, max relative error "
      << std::scientific << std::setprecision(3) << report.max_relative_error << " at "
      << report.worst_label << (report.passed ? " (ok)" : " (FAILED)") << "\n";
  return report.passed ? kSuccess : kNumericFailure;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_text(path)); }

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Relation extraction with graph neural networks whose edge parameters "
               "are generated from text.",
               "gpgnn"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  PreprocessArgs pre;
  auto* preprocess = app.add_subcommand("preprocess", "Normalize corpus splits");
  preprocess->add_option("--train", pre.train, "Training corpus (JSONL)")->required();
  preprocess->add_option("--valid", pre.valid, "Validation corpus");
  preprocess->add_option("--test", pre.test, "Test corpus");
  preprocess->add_option("--inverse", pre.inverse, "Inverse-relation map (JSON object)");
  preprocess->add_option("--relations", pre.relations, "Fixed relation vocabulary");
  preprocess->add_flag("--dense", pre.dense, "Also write the dense/rest split");
  preprocess->add_option("--out", pre.out, "Output directory")->required();

  SynthArgs syn;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-hop corpus");
  synth->add_option("--spec", syn.spec, "Generator spec (JSON)");
  synth->add_option("--seed", syn.seed, "Override the spec seed");
  synth->add_option("--out", syn.out, "Output directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", tr.config, "Training config (JSON)");
  train_cmd->add_option("--data", tr.data, "Directory with train/valid/relations files");
  train_cmd->add_option("--train", tr.train, "Normalized training corpus");
  train_cmd->add_option("--valid", tr.valid, "Normalized validation corpus");
  train_cmd->add_option("--relations", tr.relations, "Relation vocabulary (JSON array)");
  train_cmd->add_option("--inverse", tr.inverse, "Inverse-relation map");
  train_cmd->add_option("--embeddings", tr.embeddings, "Pretrained 50-d word vectors");
  train_cmd->add_option("--seed", tr.seed, "Random seed");
  train_cmd->add_option("--layers", tr.layers, "Propagation layers K")->check(CLI::PositiveNumber);
  train_cmd->add_option("--workers", tr.workers, "Data-parallel workers")->check(CLI::PositiveNumber);
  train_cmd->add_option("--out", tr.out, "Output directory")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required();
  eval_cmd->add_option("--data", ev.data, "Normalized test corpus")->required();
  eval_cmd->add_flag("--dense", ev.dense, "Evaluate only the dense subset");
  eval_cmd->add_option("--population", ev.population, "P@K% population")
      ->check(CLI::IsMember(std::vector<std::string>{"predictions", "gold-size"}));
  eval_cmd->add_option("--na-floor", ev.na_floor, "Minimum score of ranked facts");
  eval_cmd->add_option("--out", ev.out, "Output directory")->required();

  PredictArgs pr;
  auto* predict = app.add_subcommand("predict", "Score entity pairs of new sentences");
  predict->add_option("--checkpoint", pr.checkpoint, "Model checkpoint")->required();
  predict->add_option("--data", pr.data, "Sentences (JSONL)")->required();
  predict->add_option("--out", pr.out, "Output directory")->required();

  std::uint64_t gc_seed = 7;
  std::size_t gc_layers = 2;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the full model");
  gradcheck->add_option("--seed", gc_seed, "Random seed");
  gradcheck->add_option("--layers", gc_layers, "Propagation layers K")->check(CLI::PositiveNumber);

  std::vector<std::string> argv_store = {"gpgnn"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*preprocess) return run_preprocess(pre, out);
    if (*synth) return run_synth(syn, out);
    if (*train_cmd) return run_train(tr, out);
    if (*eval_cmd) return run_eval(ev, out);
    if (*predict) return run_predict(pr, out);
    if (*gradcheck) return run_gradcheck(gc_seed, gc_layers, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const Error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  }
  err << app.help();
  return kUsage;
}

}  // namespace gpgnn::cli
