#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace op2vec {

// One Dalvik executable pulled out of an archive (or loaded bare).
// ordinal is 1 for classes.dex and N for classesN.dex.
struct DexBlob {
  std::string source;  // "<archive>!<entry>" or a bare file path
  std::vector<uint8_t> bytes;
  uint32_t ordinal = 1;
};

// Read-only view of a ZIP container (APK). The central directory is parsed
// up front; entry payloads are read on demand. stored and deflate
// compression methods are supported, which covers APK dex entries.
class ApkArchive {
 public:
  struct Entry {
    std::string name;
    uint32_t compressed_size = 0;
    uint32_t uncompressed_size = 0;
    uint32_t crc32 = 0;
    uint16_t method = 0;  // 0 = stored, 8 = deflate
    uint32_t local_header_offset = 0;
  };

  explicit ApkArchive(std::filesystem::path path);

  const std::filesystem::path& path() const { return path_; }
  const std::vector<Entry>& entries() const { return entries_; }

  // Decompressed payload of one entry. Verifies the declared uncompressed
  // size and the entry CRC; mismatch is a CorruptEntry error.
  std::vector<uint8_t> read_entry(const std::string& name) const;

 private:
  const Entry& find_entry(const std::string& name) const;

  std::filesystem::path path_;
  std::vector<uint8_t> data_;
  std::vector<Entry> entries_;
};

// Names of the classes.dex / classesN.dex entries in the archive, sorted by
// ordinal ascending. Empty when the archive holds no dex entries.
std::vector<std::string> list_dex_entries(const std::filesystem::path& apk_path);

// Extract one named dex entry.
DexBlob read_dex_blob(const std::filesystem::path& apk_path,
                      const std::string& entry);

// All dex blobs of an archive in ordinal order.
std::vector<DexBlob> read_all_dex_blobs(const std::filesystem::path& apk_path);

// Ordinal encoded in a dex entry name: classes.dex -> 1, classesN.dex -> N.
// Returns 0 when the name is not a dex entry name.
uint32_t dex_entry_ordinal(const std::string& name);

}  // namespace op2vec
