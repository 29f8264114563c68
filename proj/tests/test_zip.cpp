#include <doctest.h>

#include <algorithm>
#include <cstring>

#include "dex_builder.hpp"
#include "op2vec/error.hpp"
#include "op2vec/util.hpp"
#include "op2vec/zip_reader.hpp"
#include "test_util.hpp"
#include "zip_builder.hpp"

using namespace op2vec;
using namespace op2vec::testing;

namespace {

std::vector<uint8_t> tiny_dex() {
  TestClass cls;
  cls.descriptor = "LTiny;";
  InsnStream insns;
  insns.op(0x0e);  // return-void
  cls.methods.emplace_back("run", insns);
  return build_dex({cls}).bytes;
}

}  // namespace

TEST_CASE("list_dex_entries finds the single classes.dex") {
  TempDir tmp("zip");
  auto apk = tmp / "fixture.apk";
  write_file(apk, build_zip({{"classes.dex", tiny_dex(), false}}));

  CHECK(list_dex_entries(apk) == std::vector<std::string>{"classes.dex"});
}

TEST_CASE("list_dex_entries keeps only dex entries, ordinal order") {
  TempDir tmp("zip");
  auto apk = tmp / "fixture.apk";
  // Deliberately insert out of order and add non-dex entries.
  write_file(apk, build_zip({
                      {"classes2.dex", tiny_dex(), true},
                      {"resources.arsc", {1, 2, 3}, false},
                      {"classes.dex", tiny_dex(), false},
                      {"classes10.dex", tiny_dex(), true},
                      {"classesX.dex", {9}, false},
                      {"classes0.dex", {9}, false},
                  }));

  CHECK(list_dex_entries(apk) ==
        std::vector<std::string>{"classes.dex", "classes2.dex",
                                 "classes10.dex"});
}

TEST_CASE("list_dex_entries on an archive without dex entries") {
  TempDir tmp("zip");
  auto apk = tmp / "nodex.apk";
  write_file(apk, build_zip({{"AndroidManifest.xml", {0x3c}, false}}));

  CHECK(list_dex_entries(apk).empty());
}

TEST_CASE("non-archives are rejected") {
  TempDir tmp("zip");
  auto path = tmp / "not_a_zip.bin";
  write_file(path, std::vector<uint8_t>{'M', 'Z', 0, 0, 1, 2, 3, 4});

  CHECK_THROWS_WITH_AS(list_dex_entries(path), doctest::Contains("signature"),
                       Error);
  try {
    list_dex_entries(path);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::not_an_archive);
  }
}

TEST_CASE("read_dex_blob round-trips stored and deflated payloads") {
  TempDir tmp("zip");
  auto dex = tiny_dex();
  auto apk = tmp / "fixture.apk";
  write_file(apk, build_zip({{"classes.dex", dex, false},
                             {"classes2.dex", dex, true}}));

  for (const char* entry : {"classes.dex", "classes2.dex"}) {
    DexBlob blob = read_dex_blob(apk, entry);
    CHECK(blob.bytes == dex);
    CHECK(blob.source == apk.string() + "!" + entry);
    CHECK(std::memcmp(blob.bytes.data(), "dex\n", 4) == 0);
  }
  CHECK(read_dex_blob(apk, "classes.dex").ordinal == 1);
  CHECK(read_dex_blob(apk, "classes2.dex").ordinal == 2);
}

TEST_CASE("missing entries raise EntryNotFound") {
  TempDir tmp("zip");
  auto apk = tmp / "fixture.apk";
  write_file(apk, build_zip({{"classes.dex", tiny_dex(), false}}));

  try {
    read_dex_blob(apk, "missing.dex");
    FAIL("expected EntryNotFound");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::entry_not_found);
  }
}

TEST_CASE("archive truncated by 16 bytes raises CorruptEntry") {
  TempDir tmp("zip");
  auto archive = build_zip({{"classes.dex", tiny_dex(), true}});
  archive.resize(archive.size() - 16);
  auto apk = tmp / "truncated.apk";
  write_file(apk, archive);

  try {
    read_dex_blob(apk, "classes.dex");
    FAIL("expected CorruptEntry");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::corrupt_entry);
  }
}

TEST_CASE("damaged deflate payload raises CorruptEntry") {
  TempDir tmp("zip");
  auto archive = build_zip({{"classes.dex", tiny_dex(), true}});
  // Local header (30 bytes) + name, then the deflate stream.
  size_t payload_off = 30 + std::string("classes.dex").size();
  for (size_t i = payload_off; i < payload_off + 16; ++i) {
    archive[i] ^= 0xa5;
  }
  auto apk = tmp / "corrupt.apk";
  write_file(apk, archive);

  try {
    read_dex_blob(apk, "classes.dex");
    FAIL("expected CorruptEntry");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::corrupt_entry);
  }
}

TEST_CASE("stored entry with wrong CRC raises CorruptEntry") {
  TempDir tmp("zip");
  auto dex = tiny_dex();
  auto archive = build_zip({{"classes.dex", dex, false}});
  // Flip one payload byte after the 30-byte local header + name.
  size_t payload_off = 30 + std::string("classes.dex").size() + 40;
  archive[payload_off] ^= 0xff;
  auto apk = tmp / "crc.apk";
  write_file(apk, archive);

  try {
    read_dex_blob(apk, "classes.dex");
    FAIL("expected CorruptEntry");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::corrupt_entry);
    CHECK(std::string(e.what()).find("CRC") != std::string::npos);
  }
}

TEST_CASE("read_all_dex_blobs yields strictly increasing ordinals") {
  TempDir tmp("zip");
  auto apk = tmp / "multi.apk";
  write_file(apk, build_zip({
                      {"classes3.dex", tiny_dex(), false},
                      {"classes.dex", tiny_dex(), true},
                      {"lib/foo.so", {1}, false},
                      {"classes2.dex", tiny_dex(), false},
                  }));

  auto blobs = read_all_dex_blobs(apk);
  REQUIRE(blobs.size() == 3);
  for (size_t i = 1; i < blobs.size(); ++i) {
    CHECK(blobs[i - 1].ordinal < blobs[i].ordinal);
  }
  auto names = list_dex_entries(apk);
  REQUIRE(names.size() == blobs.size());
  for (size_t i = 0; i < names.size(); ++i) {
    CHECK(blobs[i].source == apk.string() + "!" + names[i]);
  }
}

TEST_CASE("ingest leaves the archive byte-identical") {
  TempDir tmp("zip");
  auto apk = tmp / "fixture.apk";
  auto original = build_zip({{"classes.dex", tiny_dex(), true},
                             {"classes2.dex", tiny_dex(), false}});
  write_file(apk, original);

  (void)list_dex_entries(apk);
  (void)read_all_dex_blobs(apk);
  (void)read_dex_blob(apk, "classes2.dex");

  CHECK(read_file(apk) == original);
}

TEST_CASE("a dex entry below the minimum header size is corrupt") {
  TempDir tmp("zip");
  auto apk = tmp / "stub.apk";
  write_file(apk, build_zip({{"classes.dex", {1, 2, 3, 4}, false}}));
  try {
    read_dex_blob(apk, "classes.dex");
    FAIL("expected CorruptEntry");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::corrupt_entry);
  }
}

TEST_CASE("dex entry name ordinals") {
  CHECK(dex_entry_ordinal("classes.dex") == 1);
  CHECK(dex_entry_ordinal("classes2.dex") == 2);
  CHECK(dex_entry_ordinal("classes17.dex") == 17);
  CHECK(dex_entry_ordinal("classes1.dex") == 0);   // never written by tools
  CHECK(dex_entry_ordinal("classes02.dex") == 0);  // leading zero
  CHECK(dex_entry_ordinal("classesA.dex") == 0);
  CHECK(dex_entry_ordinal("lib/classes.dex") == 0);
  CHECK(dex_entry_ordinal("resources.arsc") == 0);
}
