#include "op2vec/corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>

#include <nlohmann/json.hpp>

#include "op2vec/error.hpp"
#include "op2vec/util.hpp"

namespace op2vec {

Vocabulary Vocabulary::build(const std::vector<OpcodeSequence>& sequences,
                             Mode mode) {
  Vocabulary v;
  std::fill(std::begin(v.index_of_), std::end(v.index_of_), int16_t{-1});

  if (mode == Mode::full_table) {
    v.opcode_of_.resize(kFullTableVocabularySize);
    for (size_t b = 0; b < kFullTableVocabularySize; ++b) {
      v.opcode_of_[b] = static_cast<uint8_t>(b);
      v.index_of_[b] = static_cast<int16_t>(b);
    }
    return v;
  }

  std::array<bool, 256> present{};
  size_t total = 0;
  for (const OpcodeSequence& seq : sequences) {
    total += seq.opcodes.size();
    for (uint8_t op : seq.opcodes) {
      present[op] = true;
    }
  }
  if (total == 0) {
    fail(Errc::empty_corpus, "observed-mode vocabulary needs tokens");
  }
  for (int b = 0; b < 256; ++b) {
    if (present[b]) {
      v.index_of_[b] = static_cast<int16_t>(v.opcode_of_.size());
      v.opcode_of_.push_back(static_cast<uint8_t>(b));
    }
  }
  return v;
}

size_t Vocabulary::index_of(uint8_t opcode) const {
  int16_t idx = index_of_[opcode];
  if (idx < 0) {
    fail(Errc::unknown_opcode,
         "opcode 0x" + hex_encode({opcode}) + " is not in the vocabulary");
  }
  return static_cast<size_t>(idx);
}

uint8_t Vocabulary::opcode_of(size_t index) const {
  if (index >= opcode_of_.size()) {
    fail(Errc::index_out_of_range,
         "vocabulary index " + std::to_string(index) + " >= V = " +
             std::to_string(opcode_of_.size()));
  }
  return opcode_of_[index];
}

std::vector<TrainingPair> generate_pairs(const OpcodeSequence& sequence,
                                         const Vocabulary& vocabulary,
                                         uint32_t window) {
  if (window < 1) {
    fail(Errc::bad_config, "window must be >= 1");
  }
  const auto& ops = sequence.opcodes;
  std::vector<TrainingPair> pairs;
  if (ops.size() < 2) {
    return pairs;
  }
  size_t n = ops.size();
  for (size_t i = 0; i < n; ++i) {
    auto center = static_cast<uint32_t>(vocabulary.index_of(ops[i]));
    size_t lo = i >= window ? i - window : 0;
    size_t hi = std::min(n - 1, i + window);
    for (size_t j = lo; j <= hi; ++j) {
      if (j == i) {
        continue;
      }
      pairs.push_back(
          {center, static_cast<uint32_t>(vocabulary.index_of(ops[j]))});
    }
  }
  return pairs;
}

std::vector<TrainingPair> generate_pairs(
    const std::vector<OpcodeSequence>& sequences, const Vocabulary& vocabulary,
    uint32_t window) {
  std::vector<TrainingPair> pairs;
  for (const OpcodeSequence& seq : sequences) {
    auto part = generate_pairs(seq, vocabulary, window);
    pairs.insert(pairs.end(), part.begin(), part.end());
  }
  return pairs;
}

std::vector<double> one_hot(size_t index, size_t vocab_size) {
  if (index >= vocab_size) {
    fail(Errc::index_out_of_range, "one-hot index " + std::to_string(index) +
                                       " >= V = " + std::to_string(vocab_size));
  }
  std::vector<double> v(vocab_size, 0.0);
  v[index] = 1.0;
  return v;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    fail(Errc::io_error, "cannot open manifest " + path.string());
  }
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, path.string() + ": " + e.what());
  }
  if (!doc.is_array()) {
    fail(Errc::parse_error, path.string() + ": manifest must be a JSON array");
  }

  std::filesystem::path base = path.parent_path();
  std::vector<ManifestEntry> entries;
  entries.reserve(doc.size());
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("path")) {
      fail(Errc::parse_error,
           path.string() + ": each manifest entry needs a \"path\"");
    }
    ManifestEntry e;
    std::filesystem::path p = item.at("path").get<std::string>();
    e.path = p.is_absolute() ? p : base / p;
    if (item.contains("label") && !item.at("label").is_null()) {
      int label = item.at("label").get<int>();
      if (label != 0 && label != 1) {
        fail(Errc::parse_error, path.string() + ": label must be 0 or 1, got " +
                                    std::to_string(label));
      }
      e.label = label;
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path) {
  nlohmann::json doc = nlohmann::json::array();
  for (const ManifestEntry& e : entries) {
    nlohmann::json item;
    item["path"] = e.path.string();
    if (e.label) {
      item["label"] = *e.label;
    }
    item["token_count"] = e.token_count;
    item["sha256"] = e.sha256_hex;
    doc.push_back(std::move(item));
  }
  write_file(path, doc.dump(2) + "\n");
}

std::vector<OpcodeSequence> load_sequences(
    std::vector<ManifestEntry>& entries) {
  std::vector<OpcodeSequence> sequences;
  sequences.reserve(entries.size());
  for (ManifestEntry& e : entries) {
    OpcodeSequence seq = read_opcode_sequence(e.path);
    seq.label = e.label;
    e.token_count = seq.opcodes.size();
    e.sha256_hex =
        hex_encode(sha256(seq.opcodes.data(), seq.opcodes.size()));
    sequences.push_back(std::move(seq));
  }
  return sequences;
}

}  // namespace op2vec
