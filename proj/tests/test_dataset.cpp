#include <doctest.h>

#include <cstring>
#include <random>

#include "op2vec/dataset.hpp"
#include "op2vec/error.hpp"
#include "op2vec/opcode_table.hpp"
#include "op2vec/util.hpp"
#include "test_util.hpp"

using namespace op2vec;
using namespace op2vec::testing;

namespace {

EmbeddingTable small_table() {
  EmbeddingTable table;
  table.vocab_size = 3;
  table.dim = 2;
  table.opcodes = {0x00, 0x33, 0x90};  // nop (UNK target), if-ne, add-int
  table.vectors = {0.0f,           0.0f,           // nop
                   -0.2729177368f, -0.0875072266f, // if-ne (learned run)
                   0.21f,          0.37f};         // add-int
  return table;
}

OpcodeSequence labeled_seq(std::vector<uint8_t> ops, int label) {
  OpcodeSequence s;
  s.source = "test";
  s.opcodes = std::move(ops);
  s.label = label;
  return s;
}

std::vector<EmbeddedProgram> random_records(std::mt19937_64& rng, size_t n,
                                            size_t dim) {
  std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
  std::uniform_int_distribution<size_t> pick_rows(0, 9);
  std::uniform_int_distribution<int> pick_label(0, 1);
  std::vector<EmbeddedProgram> records;
  for (size_t i = 0; i < n; ++i) {
    EmbeddedProgram r;
    r.label = pick_label(rng);
    r.rows = pick_rows(rng);
    r.dim = dim;
    r.source = "record" + std::to_string(i);
    for (size_t v = 0; v < r.rows * dim; ++v) {
      r.data.push_back(dist(rng));
    }
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace

TEST_CASE("embed_sequence replaces opcodes with table rows") {
  EmbeddingTable table = small_table();

  EmbeddedProgram one = embed_sequence(labeled_seq({0x33}, 1), table);
  CHECK(one.label == 1);
  CHECK(one.rows == 1);
  CHECK(one.dim == 2);
  CHECK(one.data[0] == -0.2729177368f);
  CHECK(one.data[1] == -0.0875072266f);

  EmbeddedProgram empty = embed_sequence(labeled_seq({}, 0), table);
  CHECK(empty.rows == 0);
  CHECK(empty.data.empty());

  EmbeddedProgram repeated =
      embed_sequence(labeled_seq({0x90, 0x90, 0x90, 0x90, 0x90}, 0), table);
  REQUIRE(repeated.rows == 5);
  for (size_t i = 0; i < 5; ++i) {
    CHECK(repeated.row(i)[0] == 0.21f);
    CHECK(repeated.row(i)[1] == 0.37f);
  }
}

TEST_CASE("embed_sequence unknown-opcode policies") {
  EmbeddingTable table = small_table();
  OpcodeSequence seq = labeled_seq({0x33, 0x44, 0x90}, 1);  // 0x44 unmapped

  SUBCASE("error names the byte and position") {
    try {
      embed_sequence(seq, table);
      FAIL("expected UnknownOpcode");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::unknown_opcode);
      CHECK(std::string(e.what()).find("aget") != std::string::npos);
      CHECK(std::string(e.what()).find("position 1") != std::string::npos);
    }
  }
  SUBCASE("skip drops the row") {
    EmbeddedProgram r =
        embed_sequence(seq, table, UnknownOpcodePolicy::skip);
    CHECK(r.rows == 2);
    CHECK(r.row(0)[0] == -0.2729177368f);
    CHECK(r.row(1)[0] == 0.21f);
  }
  SUBCASE("map_to_unk substitutes the UNK vector") {
    EmbeddedProgram r =
        embed_sequence(seq, table, UnknownOpcodePolicy::map_to_unk);
    REQUIRE(r.rows == 3);
    CHECK(r.row(1)[0] == 0.0f);
    CHECK(r.row(1)[1] == 0.0f);
  }
}

TEST_CASE("embed_sequence requires a label") {
  OpcodeSequence seq;
  seq.source = "unlabeled";
  seq.opcodes = {0x33};
  try {
    embed_sequence(seq, small_table());
    FAIL("expected MissingLabel");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::missing_label);
  }
}

TEST_CASE("dataset round-trips arbitrary records") {
  TempDir tmp("op2v");
  std::mt19937_64 rng(2024);
  EmbeddingTable table = small_table();

  for (int trial = 0; trial < 20; ++trial) {
    auto records = random_records(rng, trial % 7, table.dim);
    auto path = tmp / ("ds" + std::to_string(trial) + ".op2v");
    DatasetSummary summary = write_dataset(records, table, path);
    CHECK(summary.record_count == records.size());

    Dataset back = read_dataset(path);
    CHECK(back.table.opcodes == table.opcodes);
    CHECK(back.table.vectors == table.vectors);
    REQUIRE(back.records.size() == records.size());
    for (size_t i = 0; i < records.size(); ++i) {
      CHECK(back.records[i].label == records[i].label);
      CHECK(back.records[i].rows == records[i].rows);
      CHECK(back.records[i].data == records[i].data);
    }
  }
}

TEST_CASE("empty dataset file is valid and reads back") {
  TempDir tmp("op2v");
  auto path = tmp / "empty.op2v";
  DatasetSummary summary = write_dataset({}, small_table(), path);
  CHECK(summary.record_count == 0);
  Dataset back = read_dataset(path);
  CHECK(back.records.empty());
  CHECK(back.table.vocab_size == 3);
}

TEST_CASE("two-record fixture matches the hand-computed byte layout") {
  TempDir tmp("op2v");

  // A 1-entry table and two tiny records keep the expected buffer small
  // enough to write out by hand.
  EmbeddingTable table;
  table.vocab_size = 1;
  table.dim = 2;
  table.opcodes = {0x0e};
  table.vectors = {1.5f, -2.0f};

  EmbeddedProgram r0;
  r0.label = 0;
  r0.rows = 1;
  r0.dim = 2;
  r0.data = {1.5f, -2.0f};
  EmbeddedProgram r1;
  r1.label = 1;
  r1.rows = 0;
  r1.dim = 2;

  auto path = tmp / "fixture.op2v";
  write_dataset({r0, r1}, table, path);

  std::vector<uint8_t> expected;
  auto f32 = [&](std::vector<uint8_t>& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int i = 0; i < 4; ++i) {
      out.push_back(static_cast<uint8_t>(bits >> (8 * i)));
    }
  };
  // header: magic, version u16, V u32, D u32
  expected.insert(expected.end(), {'O', 'P', '2', 'V'});
  expected.insert(expected.end(), {1, 0});
  expected.insert(expected.end(), {1, 0, 0, 0});
  expected.insert(expected.end(), {2, 0, 0, 0});
  // snapshot: opcode byte + 2 floats
  expected.push_back(0x0e);
  f32(expected, 1.5f);
  f32(expected, -2.0f);
  // record count
  expected.insert(expected.end(), {2, 0, 0, 0});
  // record 0 payload: label, L, row data; then sha256 of the payload
  std::vector<uint8_t> payload0;
  payload0.push_back(0);
  payload0.insert(payload0.end(), {1, 0, 0, 0});
  f32(payload0, 1.5f);
  f32(payload0, -2.0f);
  expected.insert(expected.end(), payload0.begin(), payload0.end());
  auto digest0 = sha256(payload0.data(), payload0.size());
  expected.insert(expected.end(), digest0.begin(), digest0.end());
  // record 1 payload: label 1, zero rows
  std::vector<uint8_t> payload1;
  payload1.push_back(1);
  payload1.insert(payload1.end(), {0, 0, 0, 0});
  expected.insert(expected.end(), payload1.begin(), payload1.end());
  auto digest1 = sha256(payload1.data(), payload1.size());
  expected.insert(expected.end(), digest1.begin(), digest1.end());

  CHECK(read_file(path) == expected);
}

TEST_CASE("read_dataset rejects damage") {
  TempDir tmp("op2v");
  std::mt19937_64 rng(5);
  EmbeddingTable table = small_table();
  auto records = random_records(rng, 3, table.dim);
  auto path = tmp / "ds.op2v";
  write_dataset(records, table, path);
  auto bytes = read_file(path);

  SUBCASE("foreign magic") {
    auto bad = bytes;
    std::memcpy(bad.data(), "XXXX", 4);
    write_file(tmp / "bad.op2v", bad);
    try {
      read_dataset(tmp / "bad.op2v");
      FAIL("expected BadMagic");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::bad_magic);
    }
  }
  SUBCASE("unsupported version") {
    auto bad = bytes;
    bad[4] = 9;
    write_file(tmp / "v9.op2v", bad);
    try {
      read_dataset(tmp / "v9.op2v");
      FAIL("expected UnsupportedVersion");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::unsupported_version);
    }
  }
  SUBCASE("truncated mid-record") {
    auto bad = bytes;
    bad.resize(bad.size() - 7);
    write_file(tmp / "cut.op2v", bad);
    try {
      read_dataset(tmp / "cut.op2v");
      FAIL("expected TruncatedFile");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::truncated_file);
    }
  }
  SUBCASE("record content flip breaks its digest") {
    auto bad = bytes;
    // Last byte before the final record's digest: flip a data byte.
    bad[bad.size() - 33] ^= 0xff;
    write_file(tmp / "flip.op2v", bad);
    CHECK_THROWS_AS(read_dataset(tmp / "flip.op2v"), Error);
  }
}

TEST_CASE("write_dataset validates labels and dims") {
  TempDir tmp("op2v");
  EmbeddingTable table = small_table();

  EmbeddedProgram bad_dim;
  bad_dim.label = 0;
  bad_dim.rows = 1;
  bad_dim.dim = 3;
  bad_dim.data = {1.0f, 2.0f, 3.0f};
  CHECK_THROWS_AS(write_dataset({bad_dim}, table, tmp / "x.op2v"), Error);

  EmbeddedProgram bad_label;
  bad_label.label = 7;
  bad_label.rows = 0;
  bad_label.dim = 2;
  CHECK_THROWS_AS(write_dataset({bad_label}, table, tmp / "y.op2v"), Error);
}

TEST_CASE("rows written by embed_sequence always equal a table vector") {
  // Referential integrity over a random corpus of in-table opcodes.
  EmbeddingTable table = small_table();
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> pick(0, 2);
  std::vector<uint8_t> ops;
  for (int i = 0; i < 64; ++i) {
    ops.push_back(table.opcodes[pick(rng)]);
  }
  EmbeddedProgram r = embed_sequence(labeled_seq(ops, 1), table);
  REQUIRE(r.rows == ops.size());
  for (size_t i = 0; i < r.rows; ++i) {
    const float* expected = table.vector_of(ops[i]);
    CHECK(r.row(i)[0] == expected[0]);
    CHECK(r.row(i)[1] == expected[1]);
  }
}
