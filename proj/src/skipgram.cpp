#include "op2vec/skipgram.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <sstream>

#include "op2vec/error.hpp"
#include "op2vec/opcode_table.hpp"
#include "op2vec/util.hpp"

namespace op2vec {

void TrainConfig::validate() const {
  if (window < 1) fail(Errc::bad_config, "window must be >= 1");
  if (dim < 1) fail(Errc::bad_config, "dim must be >= 1");
  if (!(lr0 > 0.0)) fail(Errc::bad_config, "lr0 must be positive");
  if (epochs < 1) fail(Errc::bad_config, "epochs must be >= 1");
}

EmbeddingModel EmbeddingModel::init(size_t vocab_size, size_t dim,
                                    uint64_t seed) {
  if (vocab_size < 2) fail(Errc::bad_config, "vocabulary size must be >= 2");
  if (dim < 1) fail(Errc::bad_config, "dim must be >= 1");

  EmbeddingModel model(vocab_size, dim);
  std::mt19937_64 rng(seed);
  const double bound = 0.5 / static_cast<double>(dim);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : model.input_weights_) {
    w = dist(rng);
  }
  return model;
}

std::vector<double> EmbeddingModel::forward(size_t center) const {
  if (center >= vocab_size_) {
    fail(Errc::index_out_of_range,
         "center index " + std::to_string(center) + " >= V");
  }
  const double* h = input_row(center);

  std::vector<double> logits(vocab_size_);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < vocab_size_; ++j) {
    const double* out = output_row(j);
    double u = 0.0;
    for (size_t d = 0; d < dim_; ++d) {
      u += out[d] * h[d];
    }
    logits[j] = u;
    max_logit = std::max(max_logit, u);
  }

  double z = 0.0;
  for (size_t j = 0; j < vocab_size_; ++j) {
    logits[j] = std::exp(logits[j] - max_logit);
    z += logits[j];
  }
  for (size_t j = 0; j < vocab_size_; ++j) {
    logits[j] /= z;
  }
  return logits;
}

double EmbeddingModel::train_step(const TrainingPair& pair, double lr) {
  if (pair.center >= vocab_size_ || pair.context >= vocab_size_) {
    fail(Errc::index_out_of_range, "training pair outside vocabulary");
  }
  std::vector<double> y = forward(pair.center);
  double loss = -std::log(y[pair.context]);
  if (!std::isfinite(loss)) {
    fail(Errc::non_finite_loss, "loss diverged on pair (" +
                                    std::to_string(pair.center) + ", " +
                                    std::to_string(pair.context) + ")");
  }

  double* h = input_row(pair.center);

  // Gradient w.r.t. the hidden vector uses the pre-update output weights,
  // so accumulate it before touching them.
  std::vector<double> h_grad(dim_, 0.0);
  for (size_t j = 0; j < vocab_size_; ++j) {
    double e = y[j] - (j == pair.context ? 1.0 : 0.0);
    const double* out = output_row(j);
    for (size_t d = 0; d < dim_; ++d) {
      h_grad[d] += e * out[d];
    }
  }
  for (size_t j = 0; j < vocab_size_; ++j) {
    double e = y[j] - (j == pair.context ? 1.0 : 0.0);
    double* out = output_row(j);
    for (size_t d = 0; d < dim_; ++d) {
      out[d] -= lr * e * h[d];
    }
  }
  for (size_t d = 0; d < dim_; ++d) {
    h[d] -= lr * h_grad[d];
  }
  return loss;
}

std::pair<EmbeddingModel, TrainTrace> train(
    const std::vector<TrainingPair>& pairs, const TrainConfig& config,
    size_t vocab_size) {
  config.validate();
  if (pairs.empty()) {
    fail(Errc::empty_corpus, "no training pairs");
  }

  EmbeddingModel model = EmbeddingModel::init(vocab_size, config.dim,
                                              config.seed);
  std::mt19937_64 rng(config.seed + 0x9e3779b97f4a7c15ULL);

  std::vector<uint32_t> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) {
    order[i] = static_cast<uint32_t>(i);
  }

  TrainTrace trace;
  trace.pair_count = pairs.size();
  trace.epoch_mean_loss.reserve(config.epochs);

  const double lr_end = config.lr0 * 1e-4;
  const uint64_t total_steps =
      static_cast<uint64_t>(config.epochs) * pairs.size();
  uint64_t step = 0;

  for (uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) {
      std::shuffle(order.begin(), order.end(), rng);
    }
    double loss_sum = 0.0;
    for (uint32_t idx : order) {
      double frac = total_steps > 1
                        ? static_cast<double>(step) /
                              static_cast<double>(total_steps - 1)
                        : 0.0;
      double lr = config.lr0 + (lr_end - config.lr0) * frac;
      try {
        loss_sum += model.train_step(pairs[idx], lr);
      } catch (const Error& e) {
        if (e.code() == Errc::non_finite_loss) {
          throw Error(e.code(), "epoch " + std::to_string(epoch) + " step " +
                                    std::to_string(step) + ": " + e.what());
        }
        throw;
      }
      ++step;
    }
    trace.epoch_mean_loss.push_back(loss_sum /
                                    static_cast<double>(pairs.size()));
  }
  return {std::move(model), std::move(trace)};
}

const float* EmbeddingTable::vector_of(uint8_t opcode) const {
  for (size_t i = 0; i < opcodes.size(); ++i) {
    if (opcodes[i] == opcode) {
      return &vectors[i * dim];
    }
  }
  fail(Errc::unknown_opcode, "opcode " + opcode_mnemonic(opcode) +
                                 " is not in the embedding table");
}

bool EmbeddingTable::contains(uint8_t opcode) const {
  return std::find(opcodes.begin(), opcodes.end(), opcode) != opcodes.end();
}

EmbeddingTable extract_embeddings(const EmbeddingModel& model,
                                  const Vocabulary& vocabulary) {
  if (vocabulary.size() != model.vocab_size()) {
    fail(Errc::shape_mismatch, "vocabulary size " +
                                   std::to_string(vocabulary.size()) +
                                   " != model V " +
                                   std::to_string(model.vocab_size()));
  }
  EmbeddingTable table;
  table.vocab_size = model.vocab_size();
  table.dim = model.dim();
  table.opcodes = vocabulary.opcodes();
  table.vectors.resize(table.vocab_size * table.dim);
  for (size_t i = 0; i < table.vocab_size; ++i) {
    const double* row = model.input_row(i);
    for (size_t d = 0; d < table.dim; ++d) {
      table.vectors[i * table.dim + d] = static_cast<float>(row[d]);
    }
  }
  return table;
}

double cosine_similarity(const std::vector<float>& a,
                         const std::vector<float>& b) {
  if (a.size() != b.size()) {
    fail(Errc::length_mismatch, "vectors of length " +
                                    std::to_string(a.size()) + " and " +
                                    std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    fail(Errc::zero_vector, "cosine similarity of a zero vector");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<std::pair<uint8_t, double>> nearest(const EmbeddingTable& table,
                                                uint8_t opcode, size_t k) {
  if (!table.contains(opcode)) {
    fail(Errc::unknown_opcode, "query opcode " + opcode_mnemonic(opcode) +
                                   " is not in the embedding table");
  }
  if (k < 1 || k >= table.vocab_size) {
    fail(Errc::bad_config, "k must satisfy 1 <= k < V");
  }
  const float* q = table.vector_of(opcode);
  std::vector<float> query(q, q + table.dim);

  std::vector<std::pair<uint8_t, double>> scored;
  scored.reserve(table.vocab_size - 1);
  for (size_t i = 0; i < table.vocab_size; ++i) {
    uint8_t other = table.opcodes[i];
    if (other == opcode) {
      continue;
    }
    std::vector<float> v(&table.vectors[i * table.dim],
                         &table.vectors[i * table.dim] + table.dim);
    scored.emplace_back(other, cosine_similarity(query, v));
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) {
      return a.second > b.second;
    }
    return a.first < b.first;
  });
  scored.resize(k);
  return scored;
}

void write_embedding_table(const EmbeddingTable& table,
                           const std::filesystem::path& path) {
  std::vector<uint8_t> out;
  out.reserve(14 + table.vocab_size * (1 + table.dim * 4));
  out.insert(out.end(), {'O', '2', 'V', 'T'});
  append_u16le(out, 1);
  append_u32le(out, static_cast<uint32_t>(table.vocab_size));
  append_u32le(out, static_cast<uint32_t>(table.dim));
  for (size_t i = 0; i < table.vocab_size; ++i) {
    out.push_back(table.opcodes[i]);
    for (size_t d = 0; d < table.dim; ++d) {
      append_f32le(out, table.vectors[i * table.dim + d]);
    }
  }
  write_file(path, out);
}

EmbeddingTable read_embedding_table(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "O2VT", 4) != 0) {
    fail(Errc::bad_magic, path.string() + ": not an O2VT file");
  }
  if (bytes.size() < 14) {
    fail(Errc::truncated_file, path.string() + ": O2VT header truncated");
  }
  uint16_t version = read_u16le(&bytes[4]);
  if (version != 1) {
    fail(Errc::unsupported_version,
         path.string() + ": O2VT version " + std::to_string(version));
  }
  EmbeddingTable table;
  table.vocab_size = read_u32le(&bytes[6]);
  table.dim = read_u32le(&bytes[10]);
  size_t expected = 14 + table.vocab_size * (1 + table.dim * 4);
  if (bytes.size() != expected) {
    fail(Errc::truncated_file, path.string() + ": expected " +
                                   std::to_string(expected) + " bytes, got " +
                                   std::to_string(bytes.size()));
  }
  table.opcodes.resize(table.vocab_size);
  table.vectors.resize(table.vocab_size * table.dim);
  size_t pos = 14;
  for (size_t i = 0; i < table.vocab_size; ++i) {
    table.opcodes[i] = bytes[pos++];
    for (size_t d = 0; d < table.dim; ++d) {
      table.vectors[i * table.dim + d] = read_f32le(&bytes[pos]);
      pos += 4;
    }
  }
  return table;
}

void write_embedding_table_text(const EmbeddingTable& table,
                                const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(9);  // max_digits10 for f32
  out << table.vocab_size << ' ' << table.dim << '\n';
  for (size_t i = 0; i < table.vocab_size; ++i) {
    out << opcode_mnemonic(table.opcodes[i]);
    for (size_t d = 0; d < table.dim; ++d) {
      out << ' ' << table.vectors[i * table.dim + d];
    }
    out << '\n';
  }
  write_file(path, out.str());
}

void write_train_trace_csv(const TrainTrace& trace,
                           const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,mean_loss\n";
  for (size_t i = 0; i < trace.epoch_mean_loss.size(); ++i) {
    out << i << ',' << trace.epoch_mean_loss[i] << '\n';
  }
  write_file(path, out.str());
}

}  // namespace op2vec
