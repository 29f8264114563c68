#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "op2vec/dex.hpp"
#include "op2vec/skipgram.hpp"

namespace op2vec {

// One labeled program with every opcode replaced by its embedding vector:
// an L x D row-major f32 matrix, label 0 (benign) or 1 (malicious).
struct EmbeddedProgram {
  int label = 0;
  size_t rows = 0;
  size_t dim = 0;
  std::vector<float> data;  // rows x dim
  std::string source;

  const float* row(size_t i) const { return &data[i * dim]; }
};

// Row i of the result is the table vector of seq.opcodes[i]. The sequence
// must carry a label. Opcodes missing from the table follow `policy`:
// error raises UnknownOpcode, skip drops the row, map_to_unk substitutes
// the UNK byte's vector.
EmbeddedProgram embed_sequence(
    const OpcodeSequence& seq, const EmbeddingTable& table,
    UnknownOpcodePolicy policy = UnknownOpcodePolicy::error);

// Summary of a written dataset container.
struct DatasetSummary {
  std::filesystem::path path;
  uint32_t record_count = 0;
  uint32_t vocab_size = 0;
  uint32_t dim = 0;
};

// Dataset container, all integers little-endian:
//   magic "OP2V", u16 version = 1, u32 V, u32 D,
//   V x (u8 opcode, D x f32)              -- embedding table snapshot
//   u32 record_count,
//   per record: u8 label, u32 L, L x D f32 row-major,
//               sha256 (32 bytes) over the label/L/matrix bytes.
DatasetSummary write_dataset(const std::vector<EmbeddedProgram>& records,
                             const EmbeddingTable& table,
                             const std::filesystem::path& path);

struct Dataset {
  EmbeddingTable table;
  std::vector<EmbeddedProgram> records;
};

Dataset read_dataset(const std::filesystem::path& path);

}  // namespace op2vec
