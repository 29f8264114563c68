#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "op2vec/dex.hpp"

namespace op2vec {

// Bijection between opcode byte values and dense indices [0, V).
// Indices are assigned in ascending byte order, so a vocabulary built from
// the same corpus twice is identical.
class Vocabulary {
 public:
  enum class Mode { full_table, observed };

  // full_table: the fixed 255-token universe (byte values 0x00..0xfe),
  // independent of the corpus. observed: only bytes occurring in the
  // corpus.
  static Vocabulary build(const std::vector<OpcodeSequence>& sequences,
                          Mode mode = Mode::full_table);

  size_t size() const { return opcode_of_.size(); }
  bool contains(uint8_t opcode) const { return index_of_[opcode] >= 0; }

  size_t index_of(uint8_t opcode) const;
  uint8_t opcode_of(size_t index) const;
  const std::vector<uint8_t>& opcodes() const { return opcode_of_; }

 private:
  Vocabulary() = default;

  int16_t index_of_[256];
  std::vector<uint8_t> opcode_of_;
};

inline constexpr size_t kFullTableVocabularySize = 255;

// One (center, context) example for skip-gram training, as vocabulary
// indices.
struct TrainingPair {
  uint32_t center;
  uint32_t context;

  bool operator==(const TrainingPair&) const = default;
};

// Sliding-window pair generation for one sequence: for each position i,
// every j with |i - j| <= window and j != i contributes (seq[i], seq[j]),
// clipped at the boundaries. Order is position-major, then left-to-right.
// Every opcode of the sequence must be in the vocabulary.
std::vector<TrainingPair> generate_pairs(const OpcodeSequence& sequence,
                                         const Vocabulary& vocabulary,
                                         uint32_t window);

// generate_pairs over many sequences; windows never span file boundaries.
std::vector<TrainingPair> generate_pairs(
    const std::vector<OpcodeSequence>& sequences, const Vocabulary& vocabulary,
    uint32_t window);

// Length-V indicator vector: 1.0 at `index`, 0.0 elsewhere.
std::vector<double> one_hot(size_t index, size_t vocab_size);

// One line of the labels manifest. label is 0 (benign) or 1 (malicious)
// when present; token_count and sha256 are filled in by load_sequences.
struct ManifestEntry {
  std::filesystem::path path;
  std::optional<int> label;
  uint64_t token_count = 0;
  std::string sha256_hex;
};

// Manifest JSON: an array of {path, label?, token_count?, sha256?} objects.
// Paths are resolved relative to the manifest file's directory.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path);

// Load the opcode sequence behind each manifest entry (OPSQ binary or
// text), attach labels, and fill in token counts and content hashes.
std::vector<OpcodeSequence> load_sequences(std::vector<ManifestEntry>& entries);

}  // namespace op2vec
