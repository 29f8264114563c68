#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace op2vec {

// Little-endian scalar access into byte buffers. DEX and all of our
// container formats are little-endian throughout.
inline uint16_t read_u16le(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

inline uint32_t read_u32le(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

inline int32_t read_s32le(const uint8_t* p) {
  return static_cast<int32_t>(read_u32le(p));
}

void append_u16le(std::vector<uint8_t>& out, uint16_t v);
void append_u32le(std::vector<uint8_t>& out, uint32_t v);
void append_u64le(std::vector<uint8_t>& out, uint64_t v);
void append_f32le(std::vector<uint8_t>& out, float v);
float read_f32le(const uint8_t* p);

// Whole-file IO. read_file throws Errc::io_error; write_file fsyncs before
// returning so a completed call means the bytes are on disk.
std::vector<uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path,
                const std::vector<uint8_t>& bytes);
void write_file(const std::filesystem::path& path, const std::string& text);

// SHA-256 / SHA-1 over a byte buffer (OpenSSL-backed).
std::vector<uint8_t> sha256(const uint8_t* data, size_t size);
std::vector<uint8_t> sha1(const uint8_t* data, size_t size);
std::string hex_encode(const std::vector<uint8_t>& bytes);

}  // namespace op2vec
