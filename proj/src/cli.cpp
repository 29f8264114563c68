#include "op2vec/cli.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "op2vec/classifier.hpp"
#include "op2vec/corpus.hpp"
#include "op2vec/dataset.hpp"
#include "op2vec/dex.hpp"
#include "op2vec/error.hpp"
#include "op2vec/skipgram.hpp"
#include "op2vec/util.hpp"

namespace op2vec {
namespace {

namespace fs = std::filesystem;

// Everything the pipeline stages can be configured with. Precedence:
// command-line flag > config file > OP2VEC_SEED (seed only) > default.
struct PipelineConfig {
  TrainConfig train;
  Vocabulary::Mode vocab_mode = Vocabulary::Mode::full_table;
  UnknownOpcodePolicy unk_policy = UnknownOpcodePolicy::error;
  ClassifierConfig clf;
  bool channels_pinned = false;  // config file named "channels" explicitly
  unsigned jobs = 1;
  int verbosity = 0;
};

// One stderr line per chunk of processed files; a single write keeps
// parallel workers from interleaving.
void report_progress(const char* stage, size_t done, size_t total,
                     int verbosity) {
  size_t stride = verbosity > 0 ? 1 : 50;
  if (done % stride == 0 || done == total) {
    std::string line = std::string(stage) + ": " + std::to_string(done) +
                       "/" + std::to_string(total) + " files\n";
    std::fwrite(line.data(), 1, line.size(), stderr);
  }
}

UnknownOpcodePolicy parse_unk_policy(const std::string& s) {
  if (s == "error") return UnknownOpcodePolicy::error;
  if (s == "skip") return UnknownOpcodePolicy::skip;
  if (s == "map-to-unk") return UnknownOpcodePolicy::map_to_unk;
  fail(Errc::bad_config, "unknown unk-policy \"" + s + "\"");
}

Vocabulary::Mode parse_vocab_mode(const std::string& s) {
  if (s == "full-table") return Vocabulary::Mode::full_table;
  if (s == "observed") return Vocabulary::Mode::observed;
  fail(Errc::bad_config, "unknown vocab-mode \"" + s + "\"");
}

LossKind parse_loss(const std::string& s) {
  if (s == "cross-entropy") return LossKind::cross_entropy;
  if (s == "mse") return LossKind::mse;
  fail(Errc::bad_config, "unknown loss \"" + s + "\"");
}

void set_seed(PipelineConfig& cfg, uint64_t seed) {
  cfg.train.seed = seed;
  cfg.clf.seed = seed;
}

PipelineConfig load_pipeline_config(const std::string& config_path) {
  PipelineConfig cfg;
  if (const char* env = std::getenv("OP2VEC_SEED")) {
    try {
      set_seed(cfg, std::stoull(env));
    } catch (const std::exception&) {
      fail(Errc::bad_config,
           std::string("OP2VEC_SEED is not an integer: ") + env);
    }
  }
  if (config_path.empty()) {
    return cfg;
  }

  std::ifstream in(config_path);
  if (!in) {
    fail(Errc::io_error, "cannot open config " + config_path);
  }
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, config_path + ": " + e.what());
  }

  if (doc.contains("seed")) set_seed(cfg, doc["seed"].get<uint64_t>());
  if (doc.contains("window")) cfg.train.window = doc["window"].get<uint32_t>();
  if (doc.contains("dim")) cfg.train.dim = doc["dim"].get<uint32_t>();
  if (doc.contains("lr0")) cfg.train.lr0 = doc["lr0"].get<double>();
  if (doc.contains("epochs")) cfg.train.epochs = doc["epochs"].get<uint32_t>();
  if (doc.contains("shuffle")) cfg.train.shuffle = doc["shuffle"].get<bool>();
  if (doc.contains("vocab_mode")) {
    cfg.vocab_mode = parse_vocab_mode(doc["vocab_mode"].get<std::string>());
  }
  if (doc.contains("unk_policy")) {
    cfg.unk_policy = parse_unk_policy(doc["unk_policy"].get<std::string>());
  }
  if (doc.contains("input_length")) {
    cfg.clf.input_length = doc["input_length"].get<uint32_t>();
  }
  if (doc.contains("channels")) {
    cfg.clf.channels = doc["channels"].get<uint32_t>();
    cfg.channels_pinned = true;
  }
  if (doc.contains("conv")) {
    cfg.clf.conv.clear();
    for (const auto& layer : doc["conv"]) {
      cfg.clf.conv.push_back({layer.at("filters").get<uint32_t>(),
                              layer.at("kernel").get<uint32_t>(),
                              layer.value("pool", 0u)});
    }
  }
  if (doc.contains("dense")) {
    cfg.clf.dense = doc["dense"].get<std::vector<uint32_t>>();
  }
  if (doc.contains("loss")) {
    cfg.clf.loss = parse_loss(doc["loss"].get<std::string>());
  }
  if (doc.contains("clf_lr")) cfg.clf.lr = doc["clf_lr"].get<double>();
  if (doc.contains("clf_epochs")) {
    cfg.clf.epochs = doc["clf_epochs"].get<uint32_t>();
  }
  if (doc.contains("batch_size")) {
    cfg.clf.batch_size = doc["batch_size"].get<uint32_t>();
  }
  if (doc.contains("threshold")) {
    cfg.clf.threshold = doc["threshold"].get<double>();
  }
  if (doc.contains("jobs")) cfg.jobs = doc["jobs"].get<unsigned>();
  if (doc.contains("verbosity")) cfg.verbosity = doc["verbosity"].get<int>();
  return cfg;
}

// Index-sharded parallel map; rethrows the first worker exception.
void run_parallel(size_t item_count, unsigned jobs,
                  const std::function<void(size_t)>& fn) {
  jobs = std::max(1u, jobs);
  if (jobs == 1 || item_count <= 1) {
    for (size_t i = 0; i < item_count; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= item_count) {
        return;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) {
          first_error = std::current_exception();
        }
        next.store(item_count);
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  for (unsigned t = 0; t < std::min<size_t>(jobs, item_count); ++t) {
    threads.emplace_back(worker);
  }
  for (auto& t : threads) {
    t.join();
  }
  if (first_error) {
    std::rethrow_exception(first_error);
  }
}

std::string csv_field(const std::optional<double>& v) {
  if (!v) {
    return "";
  }
  std::ostringstream os;
  os.precision(17);
  os << *v;
  return os.str();
}

int cmd_extract(const std::vector<std::string>& inputs,
                const std::string& out_dir, bool also_text,
                const PipelineConfig& cfg) {
  fs::create_directories(out_dir);
  DexParseConfig parse_cfg;
  parse_cfg.unknown_opcode_policy = cfg.unk_policy;

  // Plan output names up front so clashes abort before any work.
  std::vector<fs::path> outputs;
  std::set<std::string> used;
  for (const std::string& input : inputs) {
    std::string stem = fs::path(input).stem().string();
    if (!used.insert(stem).second) {
      fail(Errc::io_error, "duplicate output name for input " + input);
    }
    outputs.push_back(fs::path(out_dir) / (stem + ".opsq"));
  }

  std::vector<size_t> token_counts(inputs.size());
  std::atomic<size_t> done{0};
  run_parallel(inputs.size(), cfg.jobs, [&](size_t i) {
    OpcodeSequence seq = extract_from_file(inputs[i], parse_cfg);
    token_counts[i] = seq.opcodes.size();
    write_opcode_sequence(seq, outputs[i]);
    if (also_text) {
      write_opcode_sequence_text(seq,
                                 fs::path(outputs[i]).replace_extension(".txt"));
    }
    report_progress("extract", done.fetch_add(1) + 1, inputs.size(),
                    cfg.verbosity);
  });

  nlohmann::json summary = nlohmann::json::array();
  for (size_t i = 0; i < inputs.size(); ++i) {
    summary.push_back({{"input", inputs[i]},
                       {"output", outputs[i].string()},
                       {"token_count", token_counts[i]}});
  }
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_corpus(const std::string& manifest_path, const std::string& out_path,
               const PipelineConfig& cfg) {
  auto entries = load_manifest(manifest_path);
  auto sequences = load_sequences(entries);
  Vocabulary vocab = Vocabulary::build(sequences, cfg.vocab_mode);

  uint64_t total_tokens = 0;
  for (const auto& e : entries) {
    total_tokens += e.token_count;
  }

  nlohmann::json doc;
  doc["mode"] = cfg.vocab_mode == Vocabulary::Mode::full_table ? "full-table"
                                                               : "observed";
  doc["V"] = vocab.size();
  doc["total_tokens"] = total_tokens;
  nlohmann::json opcodes = nlohmann::json::array();
  for (uint8_t op : vocab.opcodes()) {
    opcodes.push_back(op);
  }
  doc["opcodes"] = std::move(opcodes);
  nlohmann::json files = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json item{{"path", e.path.string()},
                        {"token_count", e.token_count},
                        {"sha256", e.sha256_hex}};
    if (e.label) {
      item["label"] = *e.label;
    }
    files.push_back(std::move(item));
  }
  doc["files"] = std::move(files);
  write_file(fs::path(out_path), doc.dump(2) + "\n");

  nlohmann::json summary{{"V", vocab.size()},
                         {"total_tokens", total_tokens},
                         {"files", entries.size()},
                         {"output", out_path}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_train_embeddings(const std::string& manifest_path,
                         const std::string& out_path,
                         const std::string& trace_path, bool also_text,
                         const PipelineConfig& cfg) {
  auto entries = load_manifest(manifest_path);
  auto sequences = load_sequences(entries);
  Vocabulary vocab = Vocabulary::build(sequences, cfg.vocab_mode);
  auto pairs = generate_pairs(sequences, vocab, cfg.train.window);
  std::cerr << "train-embeddings: " << sequences.size() << " files, "
            << pairs.size() << " pairs, V=" << vocab.size() << "\n";

  auto [model, trace] = train(pairs, cfg.train, vocab.size());
  EmbeddingTable table = extract_embeddings(model, vocab);
  write_embedding_table(table, out_path);
  if (also_text) {
    write_embedding_table_text(table,
                               fs::path(out_path).replace_extension(".txt"));
  }
  std::string trace_out = trace_path.empty()
                              ? fs::path(out_path).string() + ".trace.csv"
                              : trace_path;
  write_train_trace_csv(trace, trace_out);

  nlohmann::json summary{{"V", table.vocab_size},
                         {"D", table.dim},
                         {"pairs", trace.pair_count},
                         {"epochs", cfg.train.epochs},
                         {"final_mean_loss", trace.epoch_mean_loss.back()},
                         {"output", out_path},
                         {"trace", trace_out}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_embed(const std::string& table_path, const std::string& manifest_path,
              const std::string& out_path, const PipelineConfig& cfg) {
  EmbeddingTable table = read_embedding_table(table_path);
  auto entries = load_manifest(manifest_path);
  auto sequences = load_sequences(entries);

  std::vector<EmbeddedProgram> records(sequences.size());
  std::atomic<size_t> done{0};
  run_parallel(sequences.size(), cfg.jobs, [&](size_t i) {
    records[i] = embed_sequence(sequences[i], table, cfg.unk_policy);
    report_progress("embed", done.fetch_add(1) + 1, sequences.size(),
                    cfg.verbosity);
  });

  DatasetSummary summary = write_dataset(records, table, out_path);
  nlohmann::json doc{{"records", summary.record_count},
                     {"V", summary.vocab_size},
                     {"D", summary.dim},
                     {"output", out_path}};
  std::cout << doc.dump() << "\n";
  return 0;
}

int cmd_train_classifier(const std::string& dataset_path,
                         const std::string& out_path, PipelineConfig cfg) {
  Dataset ds = read_dataset(dataset_path);
  if (cfg.channels_pinned && cfg.clf.channels != ds.table.dim) {
    fail(Errc::bad_config,
         "config pins channels=" + std::to_string(cfg.clf.channels) +
             " but the dataset has D=" + std::to_string(ds.table.dim));
  }
  cfg.clf.channels = static_cast<uint32_t>(ds.table.dim);

  TrainClassifierResult result = train_classifier(ds.records, cfg.clf);
  result.model.save(out_path);

  std::cout << "epoch,mean_loss,tp,fp,tn,fn,accuracy,precision,recall,f1\n";
  for (size_t e = 0; e < result.epochs.size(); ++e) {
    const EpochReport& r = result.epochs[e];
    std::ostringstream line;
    line.precision(17);
    line << e << ',' << r.mean_train_loss << ',' << r.held_out.tp << ','
         << r.held_out.fp << ',' << r.held_out.tn << ',' << r.held_out.fn
         << ',' << csv_field(r.held_out.accuracy) << ','
         << csv_field(r.held_out.precision) << ','
         << csv_field(r.held_out.recall) << ',' << csv_field(r.held_out.f1);
    std::cout << line.str() << "\n";
  }
  std::cerr << "train-classifier: saved " << out_path << "\n";
  return 0;
}

int cmd_evaluate(const std::string& dataset_path,
                 const std::string& model_path,
                 std::optional<double> threshold) {
  Dataset ds = read_dataset(dataset_path);
  ClassifierModel model = ClassifierModel::load(model_path);
  double t = threshold ? *threshold : model.config().threshold;
  Metrics metrics = evaluate(model, ds.records, t);
  std::cout << metrics_to_json(metrics) << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Op2Vec: opcode embeddings and an end-to-end dataset "
               "pipeline for Android malware detection"};
  app.require_subcommand(1);

  std::string config_path;
  std::string unk_policy_flag;
  std::string vocab_mode_flag;
  uint64_t seed_flag = 0;
  unsigned jobs_flag = 0;
  int verbosity_flag = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "JSON config file");
    cmd->add_option("--seed", seed_flag, "seed for every stochastic stage");
    cmd->add_option("--unk-policy", unk_policy_flag,
                    "undefined-opcode policy: error|skip|map-to-unk");
    cmd->add_option("--jobs", jobs_flag, "parallel workers for file stages");
    cmd->add_flag("-v,--verbose", verbosity_flag,
                  "more frequent progress lines on stderr");
  };

  // extract
  auto* extract = app.add_subcommand(
      "extract", "extract opcode sequences from APK/DEX files");
  std::vector<std::string> extract_inputs;
  std::string extract_out;
  bool extract_text = false;
  extract->add_option("inputs", extract_inputs, "APK or DEX files")
      ->required()
      ->expected(-1);
  extract->add_option("-o,--output", extract_out, "output directory")
      ->required();
  extract->add_flag("--text", extract_text, "also write text opcode files");
  add_common(extract);

  // corpus
  auto* corpus = app.add_subcommand(
      "corpus", "build the vocabulary and corpus statistics");
  std::string corpus_manifest, corpus_out;
  corpus->add_option("-m,--manifest", corpus_manifest, "labels manifest JSON")
      ->required();
  corpus->add_option("-o,--output", corpus_out, "vocabulary JSON output")
      ->required();
  corpus->add_option("--vocab-mode", vocab_mode_flag,
                     "full-table (V=255) or observed");
  add_common(corpus);

  // train-embeddings
  auto* train_emb = app.add_subcommand(
      "train-embeddings", "learn opcode embeddings with skip-gram");
  std::string emb_manifest, emb_out, emb_trace;
  bool emb_text = false;
  train_emb->add_option("-m,--manifest", emb_manifest, "labels manifest JSON")
      ->required();
  train_emb->add_option("-o,--output", emb_out, "embedding table (.o2vt)")
      ->required();
  train_emb->add_option("--trace", emb_trace,
                        "loss trace CSV (default <output>.trace.csv)");
  train_emb->add_flag("--text", emb_text, "also write the text table");
  train_emb->add_option("--vocab-mode", vocab_mode_flag,
                        "full-table (V=255) or observed");
  uint32_t window_flag = 0, dim_flag = 0, epochs_flag = 0;
  double lr0_flag = 0.0;
  train_emb->add_option("--window", window_flag, "context window size");
  train_emb->add_option("--dim", dim_flag, "embedding dimensions");
  train_emb->add_option("--lr0", lr0_flag, "initial learning rate");
  train_emb->add_option("--epochs", epochs_flag, "training epochs");
  add_common(train_emb);

  // embed
  auto* embed = app.add_subcommand(
      "embed", "replace opcodes with embedding vectors and write the dataset");
  std::string embed_table, embed_manifest, embed_out;
  embed->add_option("-t,--table", embed_table, "embedding table (.o2vt)")
      ->required();
  embed->add_option("-m,--manifest", embed_manifest, "labels manifest JSON")
      ->required();
  embed->add_option("-o,--output", embed_out, "dataset output (.op2v)")
      ->required();
  add_common(embed);

  // train-classifier
  auto* train_clf = app.add_subcommand(
      "train-classifier", "train the 1-D CNN on an embedded dataset");
  std::string clf_dataset, clf_out;
  uint32_t clf_epochs_flag = 0, clf_batch_flag = 0;
  double clf_lr_flag = 0.0;
  train_clf->add_option("-d,--dataset", clf_dataset, "dataset (.op2v)")
      ->required();
  train_clf->add_option("-o,--output", clf_out, "model checkpoint (.o2vc)")
      ->required();
  train_clf->add_option("--clf-lr", clf_lr_flag, "classifier learning rate");
  train_clf->add_option("--clf-epochs", clf_epochs_flag, "classifier epochs");
  train_clf->add_option("--batch-size", clf_batch_flag, "mini-batch size");
  add_common(train_clf);

  // evaluate
  auto* evaluate_cmd =
      app.add_subcommand("evaluate", "evaluate a model on a dataset");
  std::string eval_dataset, eval_model;
  double threshold_flag = 0.0;
  evaluate_cmd->add_option("-d,--dataset", eval_dataset, "dataset (.op2v)")
      ->required();
  evaluate_cmd->add_option("--model", eval_model, "model checkpoint (.o2vc)")
      ->required();
  auto* threshold_opt = evaluate_cmd->add_option(
      "--threshold", threshold_flag, "decision threshold (default: model's)");
  add_common(evaluate_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the diagnostic to stderr
    return 2;
  }

  try {
    PipelineConfig cfg = load_pipeline_config(config_path);

    // Flags win over the config file.
    auto count = [&](CLI::App* cmd, const char* name) {
      return cmd->count(name) > 0;
    };
    CLI::App* active = app.get_subcommands().front();
    if (count(active, "--seed")) set_seed(cfg, seed_flag);
    if (count(active, "--jobs")) cfg.jobs = jobs_flag;
    if (count(active, "--verbose")) cfg.verbosity = verbosity_flag;
    if (count(active, "--unk-policy")) {
      cfg.unk_policy = parse_unk_policy(unk_policy_flag);
    }
    if ((active == corpus || active == train_emb) &&
        count(active, "--vocab-mode")) {
      cfg.vocab_mode = parse_vocab_mode(vocab_mode_flag);
    }
    if (active == train_emb) {
      if (count(active, "--window")) cfg.train.window = window_flag;
      if (count(active, "--dim")) cfg.train.dim = dim_flag;
      if (count(active, "--lr0")) cfg.train.lr0 = lr0_flag;
      if (count(active, "--epochs")) cfg.train.epochs = epochs_flag;
    }
    if (active == train_clf) {
      if (count(active, "--clf-lr")) cfg.clf.lr = clf_lr_flag;
      if (count(active, "--clf-epochs")) cfg.clf.epochs = clf_epochs_flag;
      if (count(active, "--batch-size")) cfg.clf.batch_size = clf_batch_flag;
    }

    if (extract->parsed()) {
      return cmd_extract(extract_inputs, extract_out, extract_text, cfg);
    }
    if (corpus->parsed()) {
      return cmd_corpus(corpus_manifest, corpus_out, cfg);
    }
    if (train_emb->parsed()) {
      return cmd_train_embeddings(emb_manifest, emb_out, emb_trace, emb_text,
                                  cfg);
    }
    if (embed->parsed()) {
      return cmd_embed(embed_table, embed_manifest, embed_out, cfg);
    }
    if (train_clf->parsed()) {
      return cmd_train_classifier(clf_dataset, clf_out, cfg);
    }
    if (evaluate_cmd->parsed()) {
      std::optional<double> threshold;
      if (threshold_opt->count() > 0) {
        threshold = threshold_flag;
      }
      return cmd_evaluate(eval_dataset, eval_model, threshold);
    }
    return 2;
  } catch (const Error& e) {
    std::cerr << "op2vec: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "op2vec: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace op2vec
