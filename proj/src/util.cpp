#include "op2vec/util.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>

#include "op2vec/error.hpp"

namespace op2vec {

void append_u16le(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void append_u32le(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
}

void append_u64le(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
}

void append_f32le(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  append_u32le(out, bits);
}

float read_f32le(const uint8_t* p) {
  uint32_t bits = read_u32le(p);
  float v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(Errc::io_error, "cannot open " + path.string());
  }
  in.seekg(0, std::ios::end);
  auto size = static_cast<size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()),
                           static_cast<std::streamsize>(size))) {
    fail(Errc::io_error, "short read on " + path.string());
  }
  return bytes;
}

namespace {

void write_bytes_synced(const std::filesystem::path& path, const void* data,
                        size_t size) {
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) {
    fail(Errc::io_error,
         "cannot open " + path.string() + " for writing: " + strerror(errno));
  }
  const char* p = static_cast<const char*>(data);
  size_t remaining = size;
  while (remaining > 0) {
    ssize_t n = ::write(fd, p, remaining);
    if (n < 0) {
      int err = errno;
      ::close(fd);
      fail(Errc::io_error, "write failed on " + path.string() + ": " +
                               strerror(err));
    }
    p += n;
    remaining -= static_cast<size_t>(n);
  }
  if (::fsync(fd) != 0) {
    int err = errno;
    ::close(fd);
    fail(Errc::io_error,
         "fsync failed on " + path.string() + ": " + strerror(err));
  }
  ::close(fd);
}

std::vector<uint8_t> evp_digest(const char* algorithm, const uint8_t* data,
                                size_t size) {
  const EVP_MD* md = EVP_get_digestbyname(algorithm);
  if (md == nullptr) {
    fail(Errc::io_error, std::string("digest unavailable: ") + algorithm);
  }
  static const uint8_t empty = 0;
  if (size == 0) {
    data = &empty;
  }
  std::vector<uint8_t> out(EVP_MD_size(md));
  unsigned int written = 0;
  if (EVP_Digest(data, size, out.data(), &written, md, nullptr) != 1 ||
      written != out.size()) {
    fail(Errc::io_error, std::string("digest failed: ") + algorithm);
  }
  return out;
}

}  // namespace

void write_file(const std::filesystem::path& path,
                const std::vector<uint8_t>& bytes) {
  write_bytes_synced(path, bytes.data(), bytes.size());
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  write_bytes_synced(path, text.data(), text.size());
}

std::vector<uint8_t> sha256(const uint8_t* data, size_t size) {
  return evp_digest("SHA256", data, size);
}

std::vector<uint8_t> sha1(const uint8_t* data, size_t size) {
  return evp_digest("SHA1", data, size);
}

std::string hex_encode(const std::vector<uint8_t>& bytes) {
  static const char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (uint8_t b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

}  // namespace op2vec
