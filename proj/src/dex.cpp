#include "op2vec/dex.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <sstream>

#include "op2vec/error.hpp"
#include "op2vec/opcode_table.hpp"
#include "op2vec/util.hpp"

namespace op2vec {
namespace {

constexpr size_t kHeaderSize = 0x70;
constexpr uint32_t kEndianConstant = 0x12345678;

// Cursor over the file buffer with bounds-checked primitive reads.
class Reader {
 public:
  Reader(std::span<const uint8_t> bytes, size_t pos) : bytes_(bytes), pos_(pos) {}

  size_t pos() const { return pos_; }

  uint16_t u16() {
    require(2);
    uint16_t v = read_u16le(&bytes_[pos_]);
    pos_ += 2;
    return v;
  }

  uint32_t u32() {
    require(4);
    uint32_t v = read_u32le(&bytes_[pos_]);
    pos_ += 4;
    return v;
  }

  uint32_t uleb128() {
    uint32_t result = 0;
    int shift = 0;
    while (true) {
      require(1);
      uint8_t byte = bytes_[pos_++];
      result |= static_cast<uint32_t>(byte & 0x7f) << shift;
      if ((byte & 0x80) == 0) {
        break;
      }
      shift += 7;
      if (shift >= 32) {
        fail(Errc::parse_error, "uleb128 overruns 32 bits at offset " +
                                    std::to_string(pos_));
      }
    }
    return result;
  }

  std::span<const uint8_t> raw(size_t n) {
    require(n);
    auto view = bytes_.subspan(pos_, n);
    pos_ += n;
    return view;
  }

 private:
  void require(size_t n) const {
    if (pos_ + n > bytes_.size()) {
      fail(Errc::parse_error,
           "read past end of file at offset " + std::to_string(pos_));
    }
  }

  std::span<const uint8_t> bytes_;
  size_t pos_;
};

// MUTF-8 string_data_item. Only the byte content is needed here; method
// names in practice are ASCII and pass through unchanged.
std::string read_string_data(std::span<const uint8_t> bytes, size_t off) {
  Reader r(bytes, off);
  r.uleb128();  // utf16_size, unused
  std::string s;
  while (true) {
    auto b = r.raw(1);
    if (b[0] == 0) {
      break;
    }
    s.push_back(static_cast<char>(b[0]));
  }
  return s;
}

// 64-bit so hostile size fields cannot wrap the width computation.
uint64_t payload_width_units(std::span<const uint8_t> insns, size_t offset,
                             uint8_t ident, size_t unit_count) {
  auto unit_at = [&](size_t idx) -> uint16_t {
    if (idx >= unit_count) {
      fail(Errc::truncated_instruction,
           "payload header overruns stream at unit " + std::to_string(idx));
    }
    return read_u16le(&insns[idx * 2]);
  };
  switch (ident) {
    case kPackedSwitchPayloadId: {
      uint64_t size = unit_at(offset + 1);
      return size * 2 + 4;
    }
    case kSparseSwitchPayloadId: {
      uint64_t size = unit_at(offset + 1);
      return size * 4 + 2;
    }
    case kFillArrayPayloadId: {
      uint64_t element_width = unit_at(offset + 1);
      uint64_t size = static_cast<uint64_t>(unit_at(offset + 2)) |
                      (static_cast<uint64_t>(unit_at(offset + 3)) << 16);
      return (element_width * size + 1) / 2 + 4;
    }
    default:
      fail(Errc::parse_error, "unrecognized payload ident");
  }
}

}  // namespace

DexHeader parse_header(std::span<const uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) {
    fail(Errc::too_short, "buffer of " + std::to_string(bytes.size()) +
                              " bytes is below the 0x70-byte header");
  }
  DexHeader h{};
  std::memcpy(h.magic, bytes.data(), 8);
  // "dex\n" then a NUL-terminated 3-digit version.
  if (std::memcmp(h.magic, "dex\n", 4) != 0 || h.magic[7] != 0 ||
      !std::all_of(h.magic + 4, h.magic + 7,
                   [](uint8_t c) { return c >= '0' && c <= '9'; })) {
    fail(Errc::bad_magic, "not a DEX file");
  }
  h.checksum = read_u32le(&bytes[8]);
  std::memcpy(h.signature, &bytes[12], 20);
  h.file_size = read_u32le(&bytes[32]);
  h.header_size = read_u32le(&bytes[36]);
  h.endian_tag = read_u32le(&bytes[40]);
  h.link_size = read_u32le(&bytes[44]);
  h.link_off = read_u32le(&bytes[48]);
  h.map_off = read_u32le(&bytes[52]);
  h.string_ids_size = read_u32le(&bytes[56]);
  h.string_ids_off = read_u32le(&bytes[60]);
  h.type_ids_size = read_u32le(&bytes[64]);
  h.type_ids_off = read_u32le(&bytes[68]);
  h.proto_ids_size = read_u32le(&bytes[72]);
  h.proto_ids_off = read_u32le(&bytes[76]);
  h.field_ids_size = read_u32le(&bytes[80]);
  h.field_ids_off = read_u32le(&bytes[84]);
  h.method_ids_size = read_u32le(&bytes[88]);
  h.method_ids_off = read_u32le(&bytes[92]);
  h.class_defs_size = read_u32le(&bytes[96]);
  h.class_defs_off = read_u32le(&bytes[100]);
  h.data_size = read_u32le(&bytes[104]);
  h.data_off = read_u32le(&bytes[108]);

  if (h.endian_tag != kEndianConstant) {
    fail(Errc::bad_endian_tag, "endian tag 0x" + [&] {
      std::ostringstream os;
      os << std::hex << h.endian_tag;
      return os.str();
    }());
  }
  if (h.header_size != kHeaderSize) {
    fail(Errc::size_mismatch,
         "header_size " + std::to_string(h.header_size) + " != 0x70");
  }
  if (h.file_size != bytes.size()) {
    fail(Errc::size_mismatch, "declared file_size " +
                                  std::to_string(h.file_size) +
                                  " != buffer length " +
                                  std::to_string(bytes.size()));
  }
  return h;
}

bool verify_checksum(std::span<const uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) {
    fail(Errc::too_short, "buffer below minimum header size");
  }
  uint32_t stored = read_u32le(&bytes[8]);
  auto actual = static_cast<uint32_t>(
      adler32(1L, &bytes[12], static_cast<uInt>(bytes.size() - 12)));
  return actual == stored;
}

bool verify_signature(std::span<const uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) {
    fail(Errc::too_short, "buffer below minimum header size");
  }
  auto digest = sha1(&bytes[32], bytes.size() - 32);
  return std::memcmp(digest.data(), &bytes[12], 20) == 0;
}

Instruction decode_instruction(std::span<const uint8_t> insns, size_t offset) {
  size_t unit_count = insns.size() / 2;
  if (offset >= unit_count) {
    fail(Errc::index_out_of_range,
         "code-unit offset " + std::to_string(offset) + " past stream end");
  }
  uint16_t unit = read_u16le(&insns[offset * 2]);
  uint8_t opcode = static_cast<uint8_t>(unit & 0xff);
  uint8_t high = static_cast<uint8_t>(unit >> 8);

  Instruction insn;
  insn.opcode = opcode;

  if (opcode == 0x00 && high != 0) {
    // Inline data block for packed-switch / sparse-switch / fill-array-data.
    if (high != kPackedSwitchPayloadId && high != kSparseSwitchPayloadId &&
        high != kFillArrayPayloadId) {
      fail(Errc::undefined_opcode, "nop with unknown high byte 0x" + [&] {
        std::ostringstream os;
        os << std::hex << static_cast<int>(high);
        return os.str();
      }() + " at unit " + std::to_string(offset));
    }
    insn.is_payload = true;
    uint64_t width = payload_width_units(insns, offset, high, unit_count);
    if (offset + width > unit_count) {
      fail(Errc::truncated_instruction,
           "payload at unit " + std::to_string(offset) + " needs " +
               std::to_string(width) + " units, " +
               std::to_string(unit_count - offset) + " remain");
    }
    insn.width = static_cast<uint32_t>(width);
    switch (high) {
      case kPackedSwitchPayloadId: insn.mnemonic = "packed-switch-payload"; break;
      case kSparseSwitchPayloadId: insn.mnemonic = "sparse-switch-payload"; break;
      default: insn.mnemonic = "fill-array-data-payload"; break;
    }
  } else {
    const OpcodeInfo& info = opcode_info(opcode);
    if (!info.defined) {
      fail(Errc::undefined_opcode,
           "opcode " + opcode_mnemonic(opcode) + " at unit " +
               std::to_string(offset));
    }
    insn.mnemonic = info.mnemonic;
    insn.width = info.width;
  }

  if (offset + insn.width > unit_count) {
    fail(Errc::truncated_instruction,
         insn.mnemonic + " at unit " + std::to_string(offset) + " needs " +
             std::to_string(insn.width) + " units, " +
             std::to_string(unit_count - offset) + " remain");
  }
  return insn;
}

std::vector<Instruction> walk_code_item(const CodeItem& item) {
  if (item.insns.size() != static_cast<size_t>(item.insns_size) * 2) {
    fail(Errc::size_mismatch, item.method_name + ": insns buffer is " +
                                  std::to_string(item.insns.size()) +
                                  " bytes for insns_size " +
                                  std::to_string(item.insns_size));
  }
  std::vector<Instruction> out;
  size_t offset = 0;
  while (offset < item.insns_size) {
    Instruction insn;
    try {
      insn = decode_instruction(item.insns, offset);
    } catch (const Error& e) {
      throw Error(e.code(), item.method_name + " at code unit " +
                                std::to_string(offset) + ": " + e.what());
    }
    offset += insn.width;
    out.push_back(std::move(insn));
  }
  return out;
}

std::vector<CodeItem> collect_code_items(std::span<const uint8_t> bytes) {
  DexHeader header = parse_header(bytes);

  auto string_at = [&](uint32_t idx) -> std::string {
    if (idx >= header.string_ids_size) {
      return "string#" + std::to_string(idx);
    }
    size_t id_off = header.string_ids_off + static_cast<size_t>(idx) * 4;
    if (id_off + 4 > bytes.size()) {
      fail(Errc::parse_error, "string_ids table out of bounds");
    }
    uint32_t data_off = read_u32le(&bytes[id_off]);
    if (data_off >= bytes.size()) {
      fail(Errc::parse_error, "string_data out of bounds");
    }
    return read_string_data(bytes, data_off);
  };

  auto method_name = [&](uint32_t method_idx) -> std::string {
    if (method_idx >= header.method_ids_size) {
      return "method#" + std::to_string(method_idx);
    }
    size_t id_off = header.method_ids_off + static_cast<size_t>(method_idx) * 8;
    if (id_off + 8 > bytes.size()) {
      fail(Errc::parse_error, "method_ids table out of bounds");
    }
    return string_at(read_u32le(&bytes[id_off + 4]));
  };

  auto read_code_item = [&](uint32_t code_off, std::string name) -> CodeItem {
    if (code_off % 4 != 0) {
      fail(Errc::parse_error,
           name + ": code_item offset " + std::to_string(code_off) +
               " is not 4-byte aligned");
    }
    Reader r(bytes, code_off);
    CodeItem item;
    item.method_name = std::move(name);
    item.offset = code_off;
    item.registers_size = r.u16();
    item.ins_size = r.u16();
    item.outs_size = r.u16();
    item.tries_size = r.u16();
    r.u32();  // debug_info_off
    item.insns_size = r.u32();
    auto raw = r.raw(static_cast<size_t>(item.insns_size) * 2);
    item.insns.assign(raw.begin(), raw.end());
    return item;
  };

  std::vector<CodeItem> items;
  for (uint32_t c = 0; c < header.class_defs_size; ++c) {
    size_t def_off = header.class_defs_off + static_cast<size_t>(c) * 32;
    if (def_off + 32 > bytes.size()) {
      fail(Errc::parse_error, "class_defs table out of bounds");
    }
    uint32_t class_data_off = read_u32le(&bytes[def_off + 24]);
    if (class_data_off == 0) {
      continue;  // class with no code
    }

    Reader r(bytes, class_data_off);
    uint32_t static_fields = r.uleb128();
    uint32_t instance_fields = r.uleb128();
    uint32_t direct_methods = r.uleb128();
    uint32_t virtual_methods = r.uleb128();
    for (uint32_t i = 0; i < static_fields + instance_fields; ++i) {
      r.uleb128();  // field_idx_diff
      r.uleb128();  // access_flags
    }
    // Direct methods first, then virtual, matching class_data order.
    for (int group = 0; group < 2; ++group) {
      uint32_t count = group == 0 ? direct_methods : virtual_methods;
      uint32_t method_idx = 0;
      for (uint32_t i = 0; i < count; ++i) {
        method_idx += r.uleb128();
        r.uleb128();  // access_flags
        uint32_t code_off = r.uleb128();
        if (code_off == 0) {
          continue;  // abstract or native
        }
        items.push_back(read_code_item(code_off, method_name(method_idx)));
      }
    }
  }
  return items;
}

OpcodeSequence extract_opcode_sequence(const DexBlob& dex,
                                       const DexParseConfig& config) {
  std::span<const uint8_t> bytes(dex.bytes);
  DexHeader header = parse_header(bytes);
  (void)header;
  if (config.verify_checksum && !verify_checksum(bytes)) {
    fail(Errc::corrupt_entry, dex.source + ": adler32 checksum mismatch");
  }
  if (config.verify_signature && !verify_signature(bytes)) {
    fail(Errc::corrupt_entry, dex.source + ": SHA-1 signature mismatch");
  }

  OpcodeSequence seq;
  seq.source = dex.source;
  for (const CodeItem& item : collect_code_items(bytes)) {
    size_t offset = 0;
    while (offset < item.insns_size) {
      Instruction insn;
      try {
        insn = decode_instruction(item.insns, offset);
      } catch (const Error& e) {
        if (e.code() == Errc::undefined_opcode &&
            config.unknown_opcode_policy != UnknownOpcodePolicy::error) {
          // Width is unknowable for an undefined opcode; resume at the next
          // code unit.
          if (config.unknown_opcode_policy == UnknownOpcodePolicy::map_to_unk) {
            seq.opcodes.push_back(kUnkOpcodeByte);
          }
          offset += 1;
          continue;
        }
        throw Error(e.code(), dex.source + ": " + item.method_name +
                                  " at code unit " + std::to_string(offset) +
                                  ": " + e.what());
      }
      if (!insn.is_payload) {
        seq.opcodes.push_back(insn.opcode);
      }
      offset += insn.width;
    }
  }
  return seq;
}

OpcodeSequence extract_from_file(const std::filesystem::path& path,
                                 const DexParseConfig& config) {
  auto bytes = read_file(path);
  // Bare .dex files skip the archive layer entirely.
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "dex\n", 4) == 0) {
    DexBlob blob{path.string(), std::move(bytes), 1};
    return extract_opcode_sequence(blob, config);
  }

  OpcodeSequence seq;
  seq.source = path.string();
  for (const DexBlob& blob : read_all_dex_blobs(path)) {
    OpcodeSequence part = extract_opcode_sequence(blob, config);
    seq.opcodes.insert(seq.opcodes.end(), part.opcodes.begin(),
                       part.opcodes.end());
  }
  return seq;
}

void write_opcode_sequence(const OpcodeSequence& seq,
                           const std::filesystem::path& path) {
  std::vector<uint8_t> out;
  out.reserve(10 + seq.opcodes.size());
  out.insert(out.end(), {'O', 'P', 'S', 'Q'});
  append_u16le(out, 1);
  append_u32le(out, static_cast<uint32_t>(seq.opcodes.size()));
  out.insert(out.end(), seq.opcodes.begin(), seq.opcodes.end());
  write_file(path, out);
}

void write_opcode_sequence_text(const OpcodeSequence& seq,
                                const std::filesystem::path& path) {
  std::string line;
  line.reserve(seq.opcodes.size() * 3 + 1);
  char buf[4];
  for (size_t i = 0; i < seq.opcodes.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", seq.opcodes[i]);
    if (i > 0) {
      line.push_back(' ');
    }
    line.append(buf);
  }
  line.push_back('\n');
  write_file(path, line);
}

OpcodeSequence read_opcode_sequence(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  OpcodeSequence seq;
  seq.source = path.string();

  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "OPSQ", 4) == 0) {
    if (bytes.size() < 10) {
      fail(Errc::truncated_file, path.string() + ": OPSQ header truncated");
    }
    uint16_t version = read_u16le(&bytes[4]);
    if (version != 1) {
      fail(Errc::unsupported_version,
           path.string() + ": OPSQ version " + std::to_string(version));
    }
    uint32_t count = read_u32le(&bytes[6]);
    if (bytes.size() != 10u + count) {
      fail(Errc::truncated_file,
           path.string() + ": OPSQ payload length mismatch");
    }
    seq.opcodes.assign(bytes.begin() + 10, bytes.end());
    return seq;
  }

  // Text form: whitespace-separated lowercase hex bytes.
  std::string text(bytes.begin(), bytes.end());
  std::istringstream in(text);
  std::string token;
  while (in >> token) {
    if (token.size() != 2 || !std::isxdigit(static_cast<unsigned char>(token[0])) ||
        !std::isxdigit(static_cast<unsigned char>(token[1]))) {
      fail(Errc::parse_error,
           path.string() + ": bad opcode token \"" + token + "\"");
    }
    seq.opcodes.push_back(
        static_cast<uint8_t>(std::stoul(token, nullptr, 16)));
  }
  return seq;
}

}  // namespace op2vec
