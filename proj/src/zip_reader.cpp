#include "op2vec/zip_reader.hpp"

#include <zlib.h>

#include <algorithm>
#include <set>

#include "op2vec/error.hpp"
#include "op2vec/util.hpp"

namespace op2vec {
namespace {

constexpr uint32_t kLocalHeaderSig = 0x04034b50;   // PK\3\4
constexpr uint32_t kCentralDirSig = 0x02014b50;    // PK\1\2
constexpr uint32_t kEndOfCentralSig = 0x06054b50;  // PK\5\6

constexpr uint16_t kMethodStored = 0;
constexpr uint16_t kMethodDeflate = 8;

// Locate the end-of-central-directory record by scanning backwards over the
// trailing comment region (comment length is at most 0xffff). The leading
// signature already checked out, so a missing record means damage, not a
// foreign file type.
size_t find_eocd(const std::vector<uint8_t>& data) {
  if (data.size() < 22) {
    fail(Errc::corrupt_entry, "archive too small for a central directory");
  }
  size_t lowest = data.size() >= 22 + 0xffff ? data.size() - 22 - 0xffff : 0;
  for (size_t pos = data.size() - 22;; --pos) {
    if (read_u32le(&data[pos]) == kEndOfCentralSig) {
      uint16_t comment_len = read_u16le(&data[pos + 20]);
      if (pos + 22 + comment_len == data.size()) {
        return pos;
      }
    }
    if (pos == lowest) {
      break;
    }
  }
  fail(Errc::corrupt_entry, "no end-of-central-directory record");
}

std::vector<uint8_t> inflate_raw(const uint8_t* src, size_t src_size,
                                 size_t expected_size,
                                 const std::string& context) {
  std::vector<uint8_t> out(expected_size);
  z_stream zs{};
  // Negative window bits: raw deflate stream, no zlib wrapper.
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) {
    fail(Errc::io_error, "inflateInit failed");
  }
  zs.next_in = const_cast<Bytef*>(src);
  zs.avail_in = static_cast<uInt>(src_size);
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = inflate(&zs, Z_FINISH);
  size_t produced = out.size() - zs.avail_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != expected_size) {
    fail(Errc::corrupt_entry, "deflate stream damaged in " + context);
  }
  return out;
}

}  // namespace

ApkArchive::ApkArchive(std::filesystem::path path) : path_(std::move(path)) {
  data_ = read_file(path_);
  if (data_.size() < 4 || read_u32le(data_.data()) != kLocalHeaderSig) {
    // Empty archives legitimately start with the EOCD record.
    if (data_.size() < 4 || read_u32le(data_.data()) != kEndOfCentralSig) {
      fail(Errc::not_an_archive, path_.string() + ": bad ZIP signature");
    }
  }

  size_t eocd = find_eocd(data_);
  uint16_t entry_count = read_u16le(&data_[eocd + 10]);
  uint32_t cd_offset = read_u32le(&data_[eocd + 16]);

  std::set<std::string> seen;
  size_t pos = cd_offset;
  entries_.reserve(entry_count);
  for (uint16_t i = 0; i < entry_count; ++i) {
    if (pos + 46 > data_.size() || read_u32le(&data_[pos]) != kCentralDirSig) {
      fail(Errc::corrupt_entry, path_.string() + ": corrupt central directory");
    }
    Entry e;
    e.method = read_u16le(&data_[pos + 10]);
    e.crc32 = read_u32le(&data_[pos + 16]);
    e.compressed_size = read_u32le(&data_[pos + 20]);
    e.uncompressed_size = read_u32le(&data_[pos + 24]);
    uint16_t name_len = read_u16le(&data_[pos + 28]);
    uint16_t extra_len = read_u16le(&data_[pos + 30]);
    uint16_t comment_len = read_u16le(&data_[pos + 32]);
    e.local_header_offset = read_u32le(&data_[pos + 42]);
    if (pos + 46 + name_len > data_.size()) {
      fail(Errc::corrupt_entry, path_.string() + ": truncated entry name");
    }
    e.name.assign(reinterpret_cast<const char*>(&data_[pos + 46]), name_len);
    if (!seen.insert(e.name).second) {
      fail(Errc::corrupt_entry,
           path_.string() + ": duplicate entry " + e.name);
    }
    entries_.push_back(std::move(e));
    pos += 46u + name_len + extra_len + comment_len;
  }
}

const ApkArchive::Entry& ApkArchive::find_entry(const std::string& name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const Entry& e) { return e.name == name; });
  if (it == entries_.end()) {
    fail(Errc::entry_not_found, name + " in " + path_.string());
  }
  return *it;
}

std::vector<uint8_t> ApkArchive::read_entry(const std::string& name) const {
  const Entry& e = find_entry(name);
  std::string context = path_.string() + "!" + name;

  size_t pos = e.local_header_offset;
  if (pos + 30 > data_.size() || read_u32le(&data_[pos]) != kLocalHeaderSig) {
    fail(Errc::corrupt_entry, context + ": bad local header");
  }
  // Name/extra lengths in the local header may differ from the central
  // directory copy, so reread them here.
  uint16_t name_len = read_u16le(&data_[pos + 26]);
  uint16_t extra_len = read_u16le(&data_[pos + 28]);
  size_t payload = pos + 30 + name_len + extra_len;
  if (payload + e.compressed_size > data_.size()) {
    fail(Errc::corrupt_entry, context + ": payload truncated");
  }

  std::vector<uint8_t> bytes;
  switch (e.method) {
    case kMethodStored:
      if (e.compressed_size != e.uncompressed_size) {
        fail(Errc::corrupt_entry, context + ": stored size mismatch");
      }
      bytes.assign(data_.begin() + payload,
                   data_.begin() + payload + e.compressed_size);
      break;
    case kMethodDeflate:
      bytes = inflate_raw(&data_[payload], e.compressed_size,
                          e.uncompressed_size, context);
      break;
    default:
      fail(Errc::corrupt_entry,
           context + ": unsupported compression method " +
               std::to_string(e.method));
  }

  if (bytes.size() != e.uncompressed_size) {
    fail(Errc::corrupt_entry, context + ": decompressed size mismatch");
  }
  uint32_t actual_crc = static_cast<uint32_t>(
      ::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
  if (actual_crc != e.crc32) {
    fail(Errc::corrupt_entry, context + ": CRC mismatch");
  }
  return bytes;
}

uint32_t dex_entry_ordinal(const std::string& name) {
  if (name == "classes.dex") {
    return 1;
  }
  // classesN.dex with N >= 2, no leading zeros.
  const std::string prefix = "classes";
  const std::string suffix = ".dex";
  if (name.size() <= prefix.size() + suffix.size() ||
      name.compare(0, prefix.size(), prefix) != 0 ||
      name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
    return 0;
  }
  std::string digits =
      name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
  if (digits.empty() || digits[0] == '0' ||
      !std::all_of(digits.begin(), digits.end(),
                   [](char c) { return c >= '0' && c <= '9'; })) {
    return 0;
  }
  unsigned long n = std::stoul(digits);
  return n >= 2 && n <= 0xffffffffUL ? static_cast<uint32_t>(n) : 0;
}

std::vector<std::string> list_dex_entries(
    const std::filesystem::path& apk_path) {
  ApkArchive archive(apk_path);
  std::vector<std::pair<uint32_t, std::string>> found;
  for (const auto& e : archive.entries()) {
    if (uint32_t ordinal = dex_entry_ordinal(e.name); ordinal != 0) {
      found.emplace_back(ordinal, e.name);
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<std::string> names;
  names.reserve(found.size());
  for (auto& [ordinal, name] : found) {
    names.push_back(std::move(name));
  }
  return names;
}

namespace {

// A dex entry smaller than the 0x70-byte header cannot be a DEX file.
void check_dex_blob_size(const DexBlob& blob) {
  if (blob.bytes.size() < 0x70) {
    fail(Errc::corrupt_entry, blob.source + ": " +
                                  std::to_string(blob.bytes.size()) +
                                  " bytes is below the minimum DEX size");
  }
}

}  // namespace

DexBlob read_dex_blob(const std::filesystem::path& apk_path,
                      const std::string& entry) {
  ApkArchive archive(apk_path);
  DexBlob blob;
  blob.source = apk_path.string() + "!" + entry;
  blob.bytes = archive.read_entry(entry);
  uint32_t ordinal = dex_entry_ordinal(entry);
  blob.ordinal = ordinal == 0 ? 1 : ordinal;
  check_dex_blob_size(blob);
  return blob;
}

std::vector<DexBlob> read_all_dex_blobs(
    const std::filesystem::path& apk_path) {
  ApkArchive archive(apk_path);
  std::vector<std::pair<uint32_t, std::string>> found;
  for (const auto& e : archive.entries()) {
    if (uint32_t ordinal = dex_entry_ordinal(e.name); ordinal != 0) {
      found.emplace_back(ordinal, e.name);
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<DexBlob> blobs;
  blobs.reserve(found.size());
  for (const auto& [ordinal, name] : found) {
    DexBlob blob;
    blob.source = apk_path.string() + "!" + name;
    blob.bytes = archive.read_entry(name);
    blob.ordinal = ordinal;
    check_dex_blob_size(blob);
    blobs.push_back(std::move(blob));
  }
  return blobs;
}

}  // namespace op2vec
