#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace op2vec {

// One row of the bundled Dalvik opcode table. `width` is the instruction
// size in 16-bit code units as fixed by the opcode's encoding format.
// Rows for byte values the instruction set leaves unassigned have
// defined == false; quickened/odex opcodes are deliberately not listed.
struct OpcodeInfo {
  uint8_t value;
  const char* mnemonic;  // nullptr for unassigned byte values
  uint8_t width;         // 0 for unassigned byte values
  bool defined;
};

// Table targets standard DEX bytecode up to version 038
// (invoke-polymorphic / invoke-custom included, const-method-handle and
// const-method-type are not).
const OpcodeInfo& opcode_info(uint8_t opcode);

bool opcode_defined(uint8_t opcode);

// Mnemonic for any byte value; unassigned bytes render as "unused-xx" so
// vocabulary exports always have a printable name.
std::string opcode_mnemonic(uint8_t opcode);

// Inverse lookup over defined opcodes only.
std::optional<uint8_t> opcode_from_mnemonic(const std::string& mnemonic);

// Payload pseudo-instructions: a code unit whose low byte is 0x00 and whose
// high byte carries one of these identifiers is inline data, not an
// operation.
inline constexpr uint8_t kPackedSwitchPayloadId = 0x01;
inline constexpr uint8_t kSparseSwitchPayloadId = 0x02;
inline constexpr uint8_t kFillArrayPayloadId = 0x03;

}  // namespace op2vec
