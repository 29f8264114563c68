#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "op2vec/corpus.hpp"
#include "op2vec/error.hpp"
#include "op2vec/opcode_table.hpp"
#include "op2vec/util.hpp"
#include "test_util.hpp"

using namespace op2vec;
using namespace op2vec::testing;

namespace {

OpcodeSequence seq_of(std::vector<uint8_t> opcodes) {
  OpcodeSequence s;
  s.source = "test";
  s.opcodes = std::move(opcodes);
  return s;
}

// Independent oracle: all ordered pairs (i, j) with |i - j| <= w, i != j,
// by a plain double loop.
std::vector<TrainingPair> brute_force_pairs(const std::vector<uint8_t>& ops,
                                            const Vocabulary& vocab,
                                            int window) {
  std::vector<TrainingPair> out;
  int n = static_cast<int>(ops.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j && std::abs(i - j) <= window) {
        out.push_back({static_cast<uint32_t>(vocab.index_of(ops[i])),
                       static_cast<uint32_t>(vocab.index_of(ops[j]))});
      }
    }
  }
  return out;
}

std::multiset<std::pair<uint32_t, uint32_t>> as_multiset(
    const std::vector<TrainingPair>& pairs) {
  std::multiset<std::pair<uint32_t, uint32_t>> out;
  for (const TrainingPair& p : pairs) {
    out.insert({p.center, p.context});
  }
  return out;
}

}  // namespace

TEST_CASE("full-table vocabulary always has 255 entries") {
  Vocabulary empty_basis = Vocabulary::build({}, Vocabulary::Mode::full_table);
  CHECK(empty_basis.size() == 255);
  CHECK(empty_basis.index_of(0x00) == 0);
  CHECK(empty_basis.index_of(0xfe) == 254);
  CHECK(empty_basis.opcode_of(0x0a) == 0x0a);
  CHECK_FALSE(empty_basis.contains(0xff));

  Vocabulary with_data = Vocabulary::build({seq_of({0x05, 0xe2})},
                                           Vocabulary::Mode::full_table);
  CHECK(with_data.size() == 255);
}

TEST_CASE("observed vocabulary keeps byte-ascending order") {
  Vocabulary v = Vocabulary::build({seq_of({0x05, 0xe2, 0x05})},
                                   Vocabulary::Mode::observed);
  CHECK(v.size() == 2);
  CHECK(v.index_of(0x05) == 0);
  CHECK(v.index_of(0xe2) == 1);
  CHECK(v.opcode_of(0) == 0x05);
  CHECK(v.opcode_of(1) == 0xe2);
  CHECK_FALSE(v.contains(0x06));
  CHECK_THROWS_AS(v.index_of(0x06), Error);
}

TEST_CASE("observed vocabulary on an empty corpus") {
  try {
    Vocabulary::build({seq_of({})}, Vocabulary::Mode::observed);
    FAIL("expected EmptyCorpus");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_corpus);
  }
}

TEST_CASE("vocabulary construction is deterministic") {
  auto seqs = std::vector<OpcodeSequence>{seq_of({0x22, 0x01, 0x90})};
  Vocabulary a = Vocabulary::build(seqs, Vocabulary::Mode::observed);
  Vocabulary b = Vocabulary::build(seqs, Vocabulary::Mode::observed);
  CHECK(a.opcodes() == b.opcodes());
}

TEST_CASE("window pairs around a center token") {
  // if-ge if-le if-lt if-gt if-eqz with window 2: the center if-lt pairs
  // with both neighbours on each side, left to right.
  std::vector<uint8_t> ops = {*opcode_from_mnemonic("if-ge"),
                              *opcode_from_mnemonic("if-le"),
                              *opcode_from_mnemonic("if-lt"),
                              *opcode_from_mnemonic("if-gt"),
                              *opcode_from_mnemonic("if-eqz")};
  Vocabulary vocab = Vocabulary::build({}, Vocabulary::Mode::full_table);
  auto pairs = generate_pairs(seq_of(ops), vocab, 2);

  uint32_t lt = static_cast<uint32_t>(vocab.index_of(ops[2]));
  std::vector<TrainingPair> with_lt_center;
  for (const TrainingPair& p : pairs) {
    if (p.center == lt) {
      with_lt_center.push_back(p);
    }
  }
  REQUIRE(with_lt_center.size() == 4);
  CHECK(with_lt_center[0].context == vocab.index_of(ops[0]));  // if-ge
  CHECK(with_lt_center[1].context == vocab.index_of(ops[1]));  // if-le
  CHECK(with_lt_center[2].context == vocab.index_of(ops[3]));  // if-gt
  CHECK(with_lt_center[3].context == vocab.index_of(ops[4]));  // if-eqz
}

TEST_CASE("degenerate sequences yield no pairs") {
  Vocabulary vocab = Vocabulary::build({}, Vocabulary::Mode::full_table);
  CHECK(generate_pairs(seq_of({}), vocab, 5).empty());
  CHECK(generate_pairs(seq_of({0x0e}), vocab, 5).empty());
  CHECK(generate_pairs(seq_of({0x0e}), vocab, 100).empty());
}

TEST_CASE("pair multisets match the brute-force oracle over 500 random cases") {
  Vocabulary vocab = Vocabulary::build({}, Vocabulary::Mode::full_table);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> pick_len(0, 64);
  std::uniform_int_distribution<int> pick_window(1, 8);
  std::uniform_int_distribution<int> pick_op(0, 254);

  for (int trial = 0; trial < 500; ++trial) {
    int len = pick_len(rng);
    int window = pick_window(rng);
    std::vector<uint8_t> ops(len);
    for (auto& op : ops) {
      op = static_cast<uint8_t>(pick_op(rng));
    }
    auto got = generate_pairs(seq_of(ops), vocab, window);
    auto want = brute_force_pairs(ops, vocab, window);
    CAPTURE(trial);
    CAPTURE(len);
    CAPTURE(window);
    CHECK(as_multiset(got) == as_multiset(want));

    // Pair-count formula: sum over positions of min(i, w) + min(L-1-i, w).
    size_t expected_count = 0;
    for (int i = 0; i < len; ++i) {
      expected_count += std::min(i, window) + std::min(len - 1 - i, window);
    }
    CHECK(got.size() == expected_count);
  }
}

TEST_CASE("pair relation is symmetric") {
  Vocabulary vocab = Vocabulary::build({}, Vocabulary::Mode::full_table);
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> pick_op(0, 254);
  std::vector<uint8_t> ops(40);
  for (auto& op : ops) {
    op = static_cast<uint8_t>(pick_op(rng));
  }
  auto pairs = generate_pairs(seq_of(ops), vocab, 4);
  auto bag = as_multiset(pairs);
  for (const TrainingPair& p : pairs) {
    CHECK(bag.count({p.context, p.center}) > 0);
  }
}

TEST_CASE("cross-file windows never happen") {
  Vocabulary vocab = Vocabulary::build({}, Vocabulary::Mode::full_table);
  std::vector<OpcodeSequence> files = {seq_of({0x01, 0x02}),
                                       seq_of({0x03, 0x04})};
  auto pairs = generate_pairs(files, vocab, 5);
  // Two files of length 2: each yields exactly 2 pairs; nothing spans.
  REQUIRE(pairs.size() == 4);
  for (const TrainingPair& p : pairs) {
    bool both_first = p.center <= vocab.index_of(0x02) &&
                      p.context <= vocab.index_of(0x02);
    bool both_second = p.center >= vocab.index_of(0x03) &&
                       p.context >= vocab.index_of(0x03);
    CHECK((both_first || both_second));
  }
}

TEST_CASE("one_hot basics") {
  auto v = one_hot(0, 2);
  CHECK(v == std::vector<double>{1.0, 0.0});

  auto big = one_hot(10, 255);
  CHECK(big.size() == 255);
  CHECK(big[10] == 1.0);
  double sum = 0.0;
  for (double x : big) {
    sum += x;
  }
  CHECK(sum == 1.0);
  CHECK(std::count(big.begin(), big.end(), 0.0) == 254);

  try {
    one_hot(2, 2);
    FAIL("expected IndexOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::index_out_of_range);
  }
}

TEST_CASE("one_hot sums to exactly 1 for random draws") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<size_t> pick_v(2, 300);
    size_t v = pick_v(rng);
    std::uniform_int_distribution<size_t> pick_i(0, v - 1);
    auto vec = one_hot(pick_i(rng), v);
    CHECK(std::accumulate(vec.begin(), vec.end(), 0.0) == 1.0);
  }
}

TEST_CASE("manifest round-trip with labels and hashes") {
  TempDir tmp("manifest");
  OpcodeSequence seq = seq_of({0x0e, 0x12, 0x0e});
  write_opcode_sequence(seq, tmp / "a.opsq");
  write_opcode_sequence(seq_of({0x01}), tmp / "b.opsq");

  write_file(tmp / "manifest.json",
             std::string(R"([
               {"path": "a.opsq", "label": 0},
               {"path": "b.opsq", "label": 1}
             ])"));

  auto entries = load_manifest(tmp / "manifest.json");
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].label == 0);
  CHECK(entries[1].label == 1);

  auto sequences = load_sequences(entries);
  REQUIRE(sequences.size() == 2);
  CHECK(sequences[0].opcodes == std::vector<uint8_t>{0x0e, 0x12, 0x0e});
  CHECK(sequences[0].label == 0);
  CHECK(sequences[1].label == 1);
  CHECK(entries[0].token_count == 3);
  CHECK(entries[1].token_count == 1);
  CHECK(entries[0].sha256_hex.size() == 64);

  write_manifest(entries, tmp / "out.json");
  auto reloaded = load_manifest(tmp / "out.json");
  REQUIRE(reloaded.size() == 2);
  CHECK(reloaded[0].label == 0);
  CHECK(reloaded[1].label == 1);
}

TEST_CASE("manifest rejects bad labels and missing paths") {
  TempDir tmp("manifest");
  write_file(tmp / "bad_label.json",
             std::string(R"([{"path": "x.opsq", "label": 2}])"));
  CHECK_THROWS_AS(load_manifest(tmp / "bad_label.json"), Error);

  write_file(tmp / "no_path.json", std::string(R"([{"label": 1}])"));
  CHECK_THROWS_AS(load_manifest(tmp / "no_path.json"), Error);

  write_file(tmp / "not_array.json", std::string(R"({"path": "x"})"));
  CHECK_THROWS_AS(load_manifest(tmp / "not_array.json"), Error);
}
