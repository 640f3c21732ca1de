#include <doctest.h>

#include "rsnmt/data.hpp"
#include "test_util.hpp"

using namespace rsnmt;

TEST_CASE("build_vocab keeps the most frequent tokens") {
  auto v = Vocabulary::build({"a a b"}, 6);
  CHECK(v.size() == 6);
  CHECK(v.id("a") == 4);  // higher frequency first
  CHECK(v.id("b") == 5);

  // only one slot: "a" (freq 2) survives, "b" and "c" fall to unk
  auto small = Vocabulary::build({"a a b c"}, 5);
  CHECK(small.size() == 5);
  CHECK(small.id("a") == 4);
  CHECK(small.id("b") == kUnkId);
  CHECK(small.id("c") == kUnkId);

  // frequency tie broken lexicographically
  auto tie = Vocabulary::build({"b a b a z"}, 6);
  CHECK(tie.id("a") == 4);
  CHECK(tie.id("b") == 5);
  CHECK(tie.id("z") == kUnkId);

  CHECK_THROWS_AS(Vocabulary::build({}, 10), DataError);
  CHECK_THROWS_AS(Vocabulary::build({"a"}, 4), ConfigError);
}

TEST_CASE("encode_sentence wraps with bos/eos and maps OOV to unk") {
  auto v = Vocabulary::build({"a b"}, 8);
  CHECK(v.encode("") == std::vector<int32_t>{kBosId, kEosId});
  CHECK(v.encode("a b") == std::vector<int32_t>{kBosId, v.id("a"), v.id("b"), kEosId});
  CHECK(v.encode("a zzz") == std::vector<int32_t>{kBosId, v.id("a"), kUnkId, kEosId});
}

TEST_CASE("encode/decode round trip for in-vocabulary text") {
  auto v = Vocabulary::build({"the cat sat on the mat"}, 32);
  std::string text = "the cat sat";
  CHECK(v.decode(v.encode(text)) == text);
}

TEST_CASE("vocabulary save/load round trip") {
  testutil::TempDir tmp("vocab");
  auto v = Vocabulary::build({"x y z y y"}, 8);
  v.save(tmp.file("v.vocab"));
  auto loaded = Vocabulary::load(tmp.file("v.vocab"));
  CHECK(loaded.size() == v.size());
  CHECK(loaded.id("y") == v.id("y"));
}

TEST_CASE("batch mask marks exactly the non-pad positions") {
  auto b = make_batch({{kBosId, 5, kEosId}, {kBosId, 5, 6, 7, kEosId}});
  CHECK(b.rows == 2);
  CHECK(b.cols == 5);
  for (int64_t r = 0; r < b.rows; ++r)
    for (int64_t c = 0; c < b.cols; ++c) {
      bool nonpad = b.at(r, c) != kPadId;
      CHECK(static_cast<bool>(b.mask[static_cast<size_t>(r * b.cols + c)]) == nonpad);
    }
}

TEST_CASE("make_batches covers every sentence exactly once, deterministically") {
  std::vector<EncodedPair> pairs;
  Rng rng(4);
  for (int i = 0; i < 23; ++i) {
    pairs.emplace_back(testutil::random_sentence_ids(rng, 1, 7, 12),
                       testutil::random_sentence_ids(rng, 1, 7, 12));
  }
  auto batches = make_batches(pairs, 32, 99, 64);
  int64_t seen = 0;
  for (const auto& [src, tgt] : batches) {
    CHECK(src.rows == tgt.rows);
    CHECK(src.rows * std::max(src.cols, tgt.cols) <= 32);
    seen += src.rows;
  }
  CHECK(seen == 23);

  auto again = make_batches(pairs, 32, 99, 64);
  REQUIRE(batches.size() == again.size());
  for (size_t i = 0; i < batches.size(); ++i) CHECK(batches[i].first.ids == again[i].first.ids);

  SUBCASE("single sentence gives a single batch") {
    std::vector<EncodedPair> one = {pairs[0]};
    CHECK(make_batches(one, 32, 1, 64).size() == 1);
  }
  SUBCASE("two equal-length sentences under budget share a batch") {
    std::vector<EncodedPair> two = {{{kBosId, 5, kEosId}, {kBosId, 5, kEosId}},
                                    {{kBosId, 6, kEosId}, {kBosId, 6, kEosId}}};
    auto bs = make_batches(two, 6, 1, 64);
    CHECK(bs.size() == 1);
    CHECK(bs[0].first.rows == 2);
  }
  SUBCASE("budget below the longest sentence is rejected") {
    CHECK_THROWS_AS(make_batches(pairs, 3, 1, 64), ConfigError);
  }
  SUBCASE("sentence over max_positions is rejected with its index") {
    std::vector<EncodedPair> long_pair = {pairs[0]};
    long_pair.push_back({std::vector<int32_t>(70, 5), {kBosId, kEosId}});
    try {
      make_batches(long_pair, 128, 1, 64);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
  }
}

TEST_CASE("subsample is a deterministic exact-count sample") {
  ParallelCorpus c;
  for (int i = 0; i < 10; ++i) c.push("s" + std::to_string(i), "t" + std::to_string(i));

  auto all = subsample(c, 1.0, 5);
  CHECK(all.src == c.src);

  auto half = subsample(c, 0.5, 5);
  CHECK(half.size() == 5);
  auto again = subsample(c, 0.5, 5);
  CHECK(half.src == again.src);

  CHECK_THROWS_AS(subsample(c, 0.0, 5), ConfigError);
  CHECK_THROWS_AS(subsample(c, 1.5, 5), ConfigError);
}

TEST_CASE("load_parallel filters empty-sided pairs and checks alignment") {
  testutil::TempDir tmp("corpus");
  write_lines(tmp.file("a.txt"), {"one two", "", "three"});
  write_lines(tmp.file("b.txt"), {"x", "y", "z"});
  auto c = load_parallel(tmp.file("a.txt"), tmp.file("b.txt"));
  CHECK(c.size() == 2);
  CHECK(c.src[0] == "one two");
  CHECK(c.tgt[1] == "z");

  write_lines(tmp.file("short.txt"), {"just one"});
  CHECK_THROWS_AS(load_parallel(tmp.file("a.txt"), tmp.file("short.txt")), DataError);
}
