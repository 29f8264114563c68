#include "op2vec/dataset.hpp"

#include <cstring>

#include "op2vec/error.hpp"
#include "op2vec/opcode_table.hpp"
#include "op2vec/util.hpp"

namespace op2vec {

EmbeddedProgram embed_sequence(const OpcodeSequence& seq,
                               const EmbeddingTable& table,
                               UnknownOpcodePolicy policy) {
  if (!seq.label) {
    fail(Errc::missing_label, seq.source + " has no benign/malicious label");
  }
  EmbeddedProgram program;
  program.label = *seq.label;
  program.dim = table.dim;
  program.source = seq.source;
  program.data.reserve(seq.opcodes.size() * table.dim);

  for (size_t i = 0; i < seq.opcodes.size(); ++i) {
    uint8_t op = seq.opcodes[i];
    const float* vec = nullptr;
    if (table.contains(op)) {
      vec = table.vector_of(op);
    } else {
      switch (policy) {
        case UnknownOpcodePolicy::error:
          fail(Errc::unknown_opcode,
               seq.source + ": opcode " + opcode_mnemonic(op) +
                   " at position " + std::to_string(i) +
                   " has no embedding");
        case UnknownOpcodePolicy::skip:
          continue;
        case UnknownOpcodePolicy::map_to_unk:
          vec = table.vector_of(kUnkOpcodeByte);
          break;
      }
    }
    program.data.insert(program.data.end(), vec, vec + table.dim);
    ++program.rows;
  }
  return program;
}

namespace {

void append_record(std::vector<uint8_t>& out, const EmbeddedProgram& r) {
  std::vector<uint8_t> payload;
  payload.reserve(5 + r.data.size() * 4);
  payload.push_back(static_cast<uint8_t>(r.label));
  append_u32le(payload, static_cast<uint32_t>(r.rows));
  for (float v : r.data) {
    append_f32le(payload, v);
  }
  auto digest = sha256(payload.data(), payload.size());
  out.insert(out.end(), payload.begin(), payload.end());
  out.insert(out.end(), digest.begin(), digest.end());
}

}  // namespace

DatasetSummary write_dataset(const std::vector<EmbeddedProgram>& records,
                             const EmbeddingTable& table,
                             const std::filesystem::path& path) {
  for (const EmbeddedProgram& r : records) {
    if (r.dim != table.dim) {
      fail(Errc::shape_mismatch,
           r.source + ": record dim " + std::to_string(r.dim) +
               " != table dim " + std::to_string(table.dim));
    }
    if (r.label != 0 && r.label != 1) {
      fail(Errc::parse_error, r.source + ": label must be 0 or 1");
    }
  }

  std::vector<uint8_t> out;
  out.insert(out.end(), {'O', 'P', '2', 'V'});
  append_u16le(out, 1);
  append_u32le(out, static_cast<uint32_t>(table.vocab_size));
  append_u32le(out, static_cast<uint32_t>(table.dim));
  for (size_t i = 0; i < table.vocab_size; ++i) {
    out.push_back(table.opcodes[i]);
    for (size_t d = 0; d < table.dim; ++d) {
      append_f32le(out, table.vectors[i * table.dim + d]);
    }
  }
  append_u32le(out, static_cast<uint32_t>(records.size()));
  for (const EmbeddedProgram& r : records) {
    append_record(out, r);
  }
  write_file(path, out);

  DatasetSummary summary;
  summary.path = path;
  summary.record_count = static_cast<uint32_t>(records.size());
  summary.vocab_size = static_cast<uint32_t>(table.vocab_size);
  summary.dim = static_cast<uint32_t>(table.dim);
  return summary;
}

Dataset read_dataset(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "OP2V", 4) != 0) {
    fail(Errc::bad_magic, path.string() + ": not an OP2V file");
  }
  size_t pos = 4;
  auto need = [&](size_t n, const char* what) {
    if (pos + n > bytes.size()) {
      fail(Errc::truncated_file,
           path.string() + ": truncated in " + what);
    }
  };

  need(10, "header");
  uint16_t version = read_u16le(&bytes[pos]);
  pos += 2;
  if (version != 1) {
    fail(Errc::unsupported_version,
         path.string() + ": OP2V version " + std::to_string(version));
  }

  Dataset ds;
  ds.table.vocab_size = read_u32le(&bytes[pos]);
  pos += 4;
  ds.table.dim = read_u32le(&bytes[pos]);
  pos += 4;

  ds.table.opcodes.resize(ds.table.vocab_size);
  ds.table.vectors.resize(ds.table.vocab_size * ds.table.dim);
  for (size_t i = 0; i < ds.table.vocab_size; ++i) {
    need(1 + ds.table.dim * 4, "embedding snapshot");
    ds.table.opcodes[i] = bytes[pos++];
    for (size_t d = 0; d < ds.table.dim; ++d) {
      ds.table.vectors[i * ds.table.dim + d] = read_f32le(&bytes[pos]);
      pos += 4;
    }
  }

  need(4, "record count");
  uint32_t record_count = read_u32le(&bytes[pos]);
  pos += 4;

  ds.records.reserve(record_count);
  for (uint32_t i = 0; i < record_count; ++i) {
    size_t payload_start = pos;
    need(5, "record header");
    EmbeddedProgram r;
    r.label = bytes[pos++];
    r.rows = read_u32le(&bytes[pos]);
    pos += 4;
    r.dim = ds.table.dim;
    size_t value_count = r.rows * ds.table.dim;
    need(value_count * 4 + 32, "record body");
    r.data.resize(value_count);
    for (size_t v = 0; v < value_count; ++v) {
      r.data[v] = read_f32le(&bytes[pos]);
      pos += 4;
    }
    auto digest = sha256(&bytes[payload_start], pos - payload_start);
    if (std::memcmp(digest.data(), &bytes[pos], 32) != 0) {
      fail(Errc::corrupt_record,
           path.string() + ": record " + std::to_string(i) +
               " sha256 mismatch");
    }
    pos += 32;
    if (r.label != 0 && r.label != 1) {
      fail(Errc::corrupt_record, path.string() + ": record " +
                                     std::to_string(i) + " label " +
                                     std::to_string(r.label));
    }
    ds.records.push_back(std::move(r));
  }
  if (pos != bytes.size()) {
    fail(Errc::truncated_file,
         path.string() + ": trailing bytes after last record");
  }
  return ds;
}

}  // namespace op2vec
