#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "op2vec/zip_reader.hpp"

namespace op2vec {

// Decoded DEX file header (first 0x70 bytes, little-endian).
struct DexHeader {
  uint8_t magic[8];
  uint32_t checksum;
  uint8_t signature[20];
  uint32_t file_size;
  uint32_t header_size;
  uint32_t endian_tag;
  uint32_t link_size;
  uint32_t link_off;
  uint32_t map_off;
  uint32_t string_ids_size;
  uint32_t string_ids_off;
  uint32_t type_ids_size;
  uint32_t type_ids_off;
  uint32_t proto_ids_size;
  uint32_t proto_ids_off;
  uint32_t field_ids_size;
  uint32_t field_ids_off;
  uint32_t method_ids_size;
  uint32_t method_ids_off;
  uint32_t class_defs_size;
  uint32_t class_defs_off;
  uint32_t data_size;
  uint32_t data_off;

  // "035" etc. from the magic.
  std::string version() const {
    return std::string(reinterpret_cast<const char*>(magic + 4), 3);
  }
};

// One method body: register counts plus the raw instruction stream.
// insns holds 2 * insns_size bytes (insns_size is in 16-bit code units).
struct CodeItem {
  std::string method_name;
  uint16_t registers_size = 0;
  uint16_t ins_size = 0;
  uint16_t outs_size = 0;
  uint16_t tries_size = 0;
  uint32_t insns_size = 0;
  std::vector<uint8_t> insns;
  uint32_t offset = 0;  // byte offset of the code_item in the file
};

// One decoded instruction. Payload pseudo-instructions (packed-switch /
// sparse-switch / fill-array-data data blocks) carry is_payload == true and
// a width computed from their own size fields.
struct Instruction {
  uint8_t opcode = 0;
  std::string mnemonic;
  uint32_t width = 0;  // 16-bit code units
  bool is_payload = false;
};

// Ordered opcode bytes of one application, plus its label when known
// (0 benign, 1 malicious).
struct OpcodeSequence {
  std::string source;
  std::vector<uint8_t> opcodes;
  std::optional<int> label;
};

// What to do when the instruction stream contains a byte the bundled table
// does not define (quickened opcodes, future versions, garbage).
//   error:      raise UndefinedOpcode (default; corpus builds stay exact)
//   skip:       drop the byte and continue at the next code unit
//   map_to_unk: substitute the UNK byte (0x00 nop) and continue
enum class UnknownOpcodePolicy { error, skip, map_to_unk };

inline constexpr uint8_t kUnkOpcodeByte = 0x00;

struct DexParseConfig {
  UnknownOpcodePolicy unknown_opcode_policy = UnknownOpcodePolicy::error;
  bool verify_checksum = true;
  bool verify_signature = false;
};

// Header decode with invariant checks (magic, endian tag, header size,
// declared file size vs buffer length).
DexHeader parse_header(std::span<const uint8_t> bytes);

// adler32 over everything after the checksum field, compared with the
// header's stored value.
bool verify_checksum(std::span<const uint8_t> bytes);

// SHA-1 over everything after the signature field, compared with the
// header's stored digest.
bool verify_signature(std::span<const uint8_t> bytes);

// Decode the instruction starting at code-unit index `offset` of a method's
// instruction stream. `insns` is the raw byte buffer (2 bytes per unit).
Instruction decode_instruction(std::span<const uint8_t> insns, size_t offset);

// Full stream walk; the returned widths sum exactly to insns_size.
std::vector<Instruction> walk_code_item(const CodeItem& item);

// All method bodies of the file: class_defs in file order, direct methods
// then virtual methods within each class_data.
std::vector<CodeItem> collect_code_items(std::span<const uint8_t> bytes);

// Opcode bytes of every non-payload instruction of every method, in the
// deterministic order above.
OpcodeSequence extract_opcode_sequence(const DexBlob& dex,
                                       const DexParseConfig& config = {});

// One sequence for a whole input file: bare .dex parsed directly, APKs get
// all classesN.dex entries concatenated in ordinal order.
OpcodeSequence extract_from_file(const std::filesystem::path& path,
                                 const DexParseConfig& config = {});

// OPSQ serialization. Binary: magic "OPSQ", u16 version, u32 count, raw
// opcode bytes. Text: space-separated lowercase hex bytes on one line.
void write_opcode_sequence(const OpcodeSequence& seq,
                           const std::filesystem::path& path);
void write_opcode_sequence_text(const OpcodeSequence& seq,
                                const std::filesystem::path& path);
// Reads either representation (sniffs the OPSQ magic).
OpcodeSequence read_opcode_sequence(const std::filesystem::path& path);

}  // namespace op2vec
