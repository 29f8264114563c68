#include "dex_builder.hpp"

#include <cstring>
#include <map>
#include <stdexcept>

#include "op2vec/util.hpp"

namespace op2vec::testing {

InsnStream& InsnStream::op(uint8_t opcode,
                           std::initializer_list<uint16_t> extra,
                           uint8_t arg_byte) {
  units_.push_back(static_cast<uint16_t>(opcode | (arg_byte << 8)));
  units_.insert(units_.end(), extra.begin(), extra.end());
  opcode_column_.push_back(opcode);
  return *this;
}

InsnStream& InsnStream::payload(std::initializer_list<uint16_t> units) {
  units_.insert(units_.end(), units.begin(), units.end());
  return *this;
}

InsnStream& InsnStream::payload(const std::vector<uint16_t>& units) {
  units_.insert(units_.end(), units.begin(), units.end());
  return *this;
}

uint32_t ref_adler32(const uint8_t* data, size_t size) {
  uint32_t a = 1, b = 0;
  for (size_t i = 0; i < size; ++i) {
    a = (a + data[i]) % 65521;
    b = (b + a) % 65521;
  }
  return (b << 16) | a;
}

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) { append_u16le(out, v); }
void put_u32(std::vector<uint8_t>& out, uint32_t v) { append_u32le(out, v); }

void put_uleb128(std::vector<uint8_t>& out, uint32_t v) {
  while (true) {
    uint8_t byte = v & 0x7f;
    v >>= 7;
    if (v != 0) {
      out.push_back(byte | 0x80);
    } else {
      out.push_back(byte);
      break;
    }
  }
}

void pad_to_4(std::vector<uint8_t>& out) {
  while (out.size() % 4 != 0) {
    out.push_back(0);
  }
}

constexpr uint32_t kNoIndex = 0xffffffff;

}  // namespace

BuiltDex build_dex(const std::vector<TestClass>& classes,
                   const std::string& version) {
  if (version.size() != 3) {
    throw std::invalid_argument("dex version must be 3 digits");
  }

  // String pool in insertion order.
  std::vector<std::string> strings;
  std::map<std::string, uint32_t> string_index;
  auto intern = [&](const std::string& s) -> uint32_t {
    auto it = string_index.find(s);
    if (it != string_index.end()) {
      return it->second;
    }
    uint32_t idx = static_cast<uint32_t>(strings.size());
    strings.push_back(s);
    string_index.emplace(s, idx);
    return idx;
  };

  uint32_t str_void = intern("V");
  uint32_t str_object = intern("Ljava/lang/Object;");

  std::vector<uint32_t> type_descriptors;  // string indices
  std::map<uint32_t, uint32_t> type_index;
  auto intern_type = [&](uint32_t string_idx) -> uint32_t {
    auto it = type_index.find(string_idx);
    if (it != type_index.end()) {
      return it->second;
    }
    uint32_t idx = static_cast<uint32_t>(type_descriptors.size());
    type_descriptors.push_back(string_idx);
    type_index.emplace(string_idx, idx);
    return idx;
  };

  uint32_t type_void = intern_type(str_void);
  uint32_t type_object = intern_type(str_object);

  struct MethodId {
    uint32_t class_type;
    uint32_t name_string;
  };
  std::vector<MethodId> method_ids;

  struct MethodRef {
    uint32_t method_id;
    const TestMethod* method;
  };
  struct ClassInfo {
    uint32_t type;
    std::vector<MethodRef> direct;
    std::vector<MethodRef> virt;
  };
  std::vector<ClassInfo> class_infos;

  BuiltDex result;
  for (const TestClass& cls : classes) {
    ClassInfo info;
    info.type = intern_type(intern(cls.descriptor));
    for (const TestMethod& m : cls.methods) {
      uint32_t name_idx = intern(m.name);
      uint32_t method_id = static_cast<uint32_t>(method_ids.size());
      method_ids.push_back({info.type, name_idx});
      (m.is_virtual ? info.virt : info.direct).push_back({method_id, &m});
    }
    class_infos.push_back(std::move(info));
  }
  for (const ClassInfo& info : class_infos) {
    for (const auto* group : {&info.direct, &info.virt}) {
      for (const MethodRef& ref : *group) {
        result.expected_opcodes.insert(result.expected_opcodes.end(),
                                       ref.method->opcode_column.begin(),
                                       ref.method->opcode_column.end());
      }
    }
  }

  // Fixed-size tables are laid out back to back after the header; offsets
  // are all computable up front except for the data section, which is
  // appended piecewise.
  const uint32_t string_ids_off = 0x70;
  const uint32_t type_ids_off =
      string_ids_off + 4 * static_cast<uint32_t>(strings.size());
  const uint32_t proto_ids_off =
      type_ids_off + 4 * static_cast<uint32_t>(type_descriptors.size());
  const uint32_t method_ids_off = proto_ids_off + 12;  // single "()V" proto
  const uint32_t class_defs_off =
      method_ids_off + 8 * static_cast<uint32_t>(method_ids.size());
  const uint32_t data_off =
      class_defs_off + 32 * static_cast<uint32_t>(class_infos.size());

  // Data section contents, offsets relative to data_off until fixed up.
  std::vector<uint8_t> data;

  // code items, 4-byte aligned.
  std::map<const TestMethod*, uint32_t> code_offsets;
  for (const ClassInfo& info : class_infos) {
    for (const auto* group : {&info.direct, &info.virt}) {
      for (const MethodRef& ref : *group) {
        pad_to_4(data);
        code_offsets[ref.method] = data_off + static_cast<uint32_t>(data.size());
        put_u16(data, ref.method->registers);
        put_u16(data, ref.method->ins);
        put_u16(data, ref.method->outs);
        put_u16(data, 0);  // tries_size
        put_u32(data, 0);  // debug_info_off
        put_u32(data, static_cast<uint32_t>(ref.method->units.size()));
        for (uint16_t unit : ref.method->units) {
          put_u16(data, unit);
        }
      }
    }
  }

  // class_data items.
  std::vector<uint32_t> class_data_offsets(class_infos.size());
  for (size_t c = 0; c < class_infos.size(); ++c) {
    const ClassInfo& info = class_infos[c];
    class_data_offsets[c] = data_off + static_cast<uint32_t>(data.size());
    put_uleb128(data, 0);  // static_fields_size
    put_uleb128(data, 0);  // instance_fields_size
    put_uleb128(data, static_cast<uint32_t>(info.direct.size()));
    put_uleb128(data, static_cast<uint32_t>(info.virt.size()));
    for (const auto* group : {&info.direct, &info.virt}) {
      uint32_t previous = 0;
      for (const MethodRef& ref : *group) {
        put_uleb128(data, ref.method_id - previous);
        previous = ref.method_id;
        put_uleb128(data, 0x1);  // ACC_PUBLIC
        put_uleb128(data, code_offsets.at(ref.method));
      }
    }
  }

  // string_data items.
  std::vector<uint32_t> string_data_offsets(strings.size());
  for (size_t s = 0; s < strings.size(); ++s) {
    string_data_offsets[s] = data_off + static_cast<uint32_t>(data.size());
    put_uleb128(data, static_cast<uint32_t>(strings[s].size()));
    data.insert(data.end(), strings[s].begin(), strings[s].end());
    data.push_back(0);
  }

  // map_list.
  pad_to_4(data);
  const uint32_t map_off = data_off + static_cast<uint32_t>(data.size());
  struct MapItem {
    uint16_t type;
    uint32_t size;
    uint32_t offset;
  };
  std::vector<MapItem> map_items = {
      {0x0000, 1, 0},  // header
      {0x0001, static_cast<uint32_t>(strings.size()), string_ids_off},
      {0x0002, static_cast<uint32_t>(type_descriptors.size()), type_ids_off},
      {0x0003, 1, proto_ids_off},
      {0x0005, static_cast<uint32_t>(method_ids.size()), method_ids_off},
      {0x0006, static_cast<uint32_t>(class_infos.size()), class_defs_off},
      {0x1000, 1, map_off},
  };
  put_u32(data, static_cast<uint32_t>(map_items.size()));
  for (const MapItem& item : map_items) {
    put_u16(data, item.type);
    put_u16(data, 0);
    put_u32(data, item.size);
    put_u32(data, item.offset);
  }

  const uint32_t file_size = data_off + static_cast<uint32_t>(data.size());

  // Assemble the whole file.
  std::vector<uint8_t>& out = result.bytes;
  out.reserve(file_size);
  out.insert(out.end(), {'d', 'e', 'x', '\n'});
  out.insert(out.end(), version.begin(), version.end());
  out.push_back(0);
  put_u32(out, 0);                  // checksum, patched below
  out.insert(out.end(), 20, 0);     // signature, patched below
  put_u32(out, file_size);
  put_u32(out, 0x70);               // header_size
  put_u32(out, 0x12345678);         // endian_tag
  put_u32(out, 0);                  // link_size
  put_u32(out, 0);                  // link_off
  put_u32(out, map_off);
  put_u32(out, static_cast<uint32_t>(strings.size()));
  put_u32(out, string_ids_off);
  put_u32(out, static_cast<uint32_t>(type_descriptors.size()));
  put_u32(out, type_ids_off);
  put_u32(out, 1);                  // proto_ids_size
  put_u32(out, proto_ids_off);
  put_u32(out, 0);                  // field_ids_size
  put_u32(out, 0);                  // field_ids_off
  put_u32(out, static_cast<uint32_t>(method_ids.size()));
  put_u32(out, method_ids_off);
  put_u32(out, static_cast<uint32_t>(class_infos.size()));
  put_u32(out, class_defs_off);
  put_u32(out, static_cast<uint32_t>(data.size()));
  put_u32(out, data_off);

  for (size_t s = 0; s < strings.size(); ++s) {
    put_u32(out, string_data_offsets[s]);
  }
  for (uint32_t descriptor : type_descriptors) {
    put_u32(out, descriptor);
  }
  // proto "()V"
  put_u32(out, str_void);   // shorty_idx
  put_u32(out, type_void);  // return_type_idx
  put_u32(out, 0);          // parameters_off
  for (const MethodId& m : method_ids) {
    put_u16(out, static_cast<uint16_t>(m.class_type));
    put_u16(out, 0);  // proto_idx
    put_u32(out, m.name_string);
  }
  for (size_t c = 0; c < class_infos.size(); ++c) {
    put_u32(out, class_infos[c].type);
    put_u32(out, 0x1);  // ACC_PUBLIC
    put_u32(out, class_infos[c].type == type_object ? kNoIndex : type_object);
    put_u32(out, 0);        // interfaces_off
    put_u32(out, kNoIndex);  // source_file_idx
    put_u32(out, 0);        // annotations_off
    put_u32(out, class_data_offsets[c]);
    put_u32(out, 0);  // static_values_off
  }
  out.insert(out.end(), data.begin(), data.end());

  if (out.size() != file_size) {
    throw std::logic_error("dex layout accounting error");
  }

  // Signature over everything after it, then checksum over everything
  // after the checksum.
  auto digest = sha1(&out[32], out.size() - 32);
  std::memcpy(&out[12], digest.data(), 20);
  uint32_t checksum = ref_adler32(&out[12], out.size() - 12);
  out[8] = static_cast<uint8_t>(checksum);
  out[9] = static_cast<uint8_t>(checksum >> 8);
  out[10] = static_cast<uint8_t>(checksum >> 16);
  out[11] = static_cast<uint8_t>(checksum >> 24);
  return result;
}

}  // namespace op2vec::testing
