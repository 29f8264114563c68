#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "op2vec/corpus.hpp"

namespace op2vec {

// Hyperparameters for skip-gram training. Defaults: window 5 on each side,
// 2-dimensional vectors, learning rate decaying linearly from 0.025 to
// 0.025e-4 over all steps.
struct TrainConfig {
  uint32_t window = 5;
  uint32_t dim = 2;
  double lr0 = 0.025;
  uint32_t epochs = 5;
  uint64_t seed = 1;
  bool shuffle = true;

  void validate() const;
};

// Skip-gram network weights. input_weights is V x D (one row per token);
// output_weights is stored token-major as V x D and plays the role of the
// D x V output matrix transposed. Everything trains in 64-bit.
class EmbeddingModel {
 public:
  // input_weights ~ uniform[-0.5/D, +0.5/D] from the seeded generator;
  // output_weights all zero. Deterministic given the seed.
  static EmbeddingModel init(size_t vocab_size, size_t dim, uint64_t seed);

  size_t vocab_size() const { return vocab_size_; }
  size_t dim() const { return dim_; }

  double* input_row(size_t token) { return &input_weights_[token * dim_]; }
  const double* input_row(size_t token) const {
    return &input_weights_[token * dim_];
  }
  double* output_row(size_t token) { return &output_weights_[token * dim_]; }
  const double* output_row(size_t token) const {
    return &output_weights_[token * dim_];
  }

  std::vector<double>& input_weights() { return input_weights_; }
  const std::vector<double>& input_weights() const { return input_weights_; }
  std::vector<double>& output_weights() { return output_weights_; }
  const std::vector<double>& output_weights() const { return output_weights_; }

  // Softmax distribution over context tokens for a center token:
  // h = input row, logits u_j = <output row j, h>, max-subtracted softmax.
  std::vector<double> forward(size_t center) const;

  // One SGD step on a single pair. Returns the pre-update cross-entropy
  // loss -ln y[context].
  double train_step(const TrainingPair& pair, double lr);

 private:
  EmbeddingModel(size_t vocab_size, size_t dim)
      : vocab_size_(vocab_size), dim_(dim),
        input_weights_(vocab_size * dim),
        output_weights_(vocab_size * dim, 0.0) {}

  size_t vocab_size_;
  size_t dim_;
  std::vector<double> input_weights_;
  std::vector<double> output_weights_;
};

struct TrainTrace {
  std::vector<double> epoch_mean_loss;
  uint64_t pair_count = 0;
};

// Full training run: `epochs` passes over the pairs, reshuffled each epoch
// from the seeded generator, learning rate decaying linearly from lr0 to
// lr0 * 1e-4 across all steps. Single-threaded and bit-reproducible.
std::pair<EmbeddingModel, TrainTrace> train(
    const std::vector<TrainingPair>& pairs, const TrainConfig& config,
    size_t vocab_size);

// The learned opcode -> vector map: row i of the input weight matrix is the
// embedding of vocabulary token i. Vectors are narrowed to f32, the
// serialization width.
struct EmbeddingTable {
  size_t vocab_size = 0;
  size_t dim = 0;
  std::vector<uint8_t> opcodes;  // vocab order
  std::vector<float> vectors;    // V x D row-major

  const float* vector_of(uint8_t opcode) const;
  bool contains(uint8_t opcode) const;
};

EmbeddingTable extract_embeddings(const EmbeddingModel& model,
                                  const Vocabulary& vocabulary);

// dot(a, b) / (|a| |b|); both vectors must be nonzero.
double cosine_similarity(const std::vector<float>& a,
                         const std::vector<float>& b);

// k most similar opcodes to `opcode`, best first, query excluded. Ties
// break toward the smaller opcode byte.
std::vector<std::pair<uint8_t, double>> nearest(const EmbeddingTable& table,
                                                uint8_t opcode, size_t k);

// Binary table format: magic "O2VT", u16 version, u32 V, u32 D, then V
// records of (u8 opcode, D x f32 LE).
void write_embedding_table(const EmbeddingTable& table,
                           const std::filesystem::path& path);
EmbeddingTable read_embedding_table(const std::filesystem::path& path);

// word2vec-style text export: "V D" header line, then one line per opcode
// of mnemonic followed by D decimal reals.
void write_embedding_table_text(const EmbeddingTable& table,
                                const std::filesystem::path& path);

// epoch,mean_loss CSV.
void write_train_trace_csv(const TrainTrace& trace,
                           const std::filesystem::path& path);

}  // namespace op2vec
