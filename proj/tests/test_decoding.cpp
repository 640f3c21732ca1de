#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "rsnmt/decoding.hpp"
#include "rsnmt/eval.hpp"
#include "test_util.hpp"

using namespace rsnmt;
using testutil::oracle_enumerate;
using testutil::oracle_rescore;
using testutil::random_sentence_ids;
using testutil::tiny_config;

TEST_CASE("length penalty") {
  CHECK(length_penalty(1, 0.0) == 1.0);
  CHECK(length_penalty(42, 0.0) == 1.0);
  CHECK(length_penalty(1, 0.6) == 1.0);  // (5+1)/6 = 1
  CHECK(length_penalty(7, 0.6) == doctest::Approx(std::pow(2.0, 0.6)).epsilon(1e-12));
  CHECK_THROWS_AS(length_penalty(0, 0.6), ConfigError);
}

TEST_CASE("a model that always peaks at eos emits the empty sequence") {
  auto cfg = tiny_config(StackingMode::recurrent(1));
  auto w = build_model<float>(cfg, 1);
  // zero output projection: all logits equal, and after masking pad/bos the
  // lowest remaining id is eos
  std::fill(w.output_projection->data.begin(), w.output_projection->data.end(), 0.0f);

  DecodeConfig dc;
  dc.alpha = 0.0;
  auto res = greedy_decode_sentence(w, {kBosId, 5, 6, kEosId}, dc);
  CHECK(res.best.tokens.empty());
  CHECK(res.best.ended_with_eos);

  dc.beam_size = 1;
  auto beam = beam_decode_sentence(w, {kBosId, 5, 6, kEosId}, dc);
  CHECK(beam.best.tokens.empty());
}

TEST_CASE("beam size 1 with alpha 0 is greedy, token for token") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    auto cfg = tiny_config(seed % 2 ? StackingMode::recurrent(2) : StackingMode::vanilla(2, 2),
                           11, 8, 16, 2);
    auto w = build_model<float>(cfg, 1000 + seed);
    Rng rng(seed);
    auto src = random_sentence_ids(rng, 2, 6, cfg.src_vocab_size);
    DecodeConfig dc;
    dc.beam_size = 1;
    dc.alpha = 0.0;
    auto g = greedy_decode_sentence(w, src, dc);
    auto b = beam_decode_sentence(w, src, dc);
    CHECK(g.best.tokens == b.best.tokens);
    CHECK(g.best.ended_with_eos == b.best.ended_with_eos);
    CHECK(g.best.score == doctest::Approx(b.best.score).epsilon(1e-9));
  }
}

TEST_CASE("returned score matches an independent rescoring pass") {
  auto cfg = tiny_config(StackingMode::recurrent(2));
  auto w = build_model<float>(cfg, 9);
  Rng rng(10);
  auto src = random_sentence_ids(rng, 3, 6, cfg.src_vocab_size);
  DecodeConfig dc;
  dc.beam_size = 3;
  dc.alpha = 0.6;
  auto res = beam_decode_sentence(w, src, dc);
  double logprob = oracle_rescore(w, src, res.best.tokens, res.best.ended_with_eos);
  CHECK(res.best.logprob == doctest::Approx(logprob).epsilon(1e-6));
  CHECK(res.best.score ==
        doctest::Approx(logprob / length_penalty(res.best.length, dc.alpha)).epsilon(1e-6));
}

TEST_CASE("beam search matches exhaustive enumeration on a 2-step tree") {
  auto cfg = tiny_config(StackingMode::recurrent(1), /*vocab=*/6, /*d_model=*/8, /*d_ff=*/16,
                         /*n_heads=*/2);
  for (uint64_t seed : {3u, 4u, 5u}) {
    auto w = build_model<float>(cfg, seed);
    Rng rng(seed);
    auto src = random_sentence_ids(rng, 2, 3, cfg.src_vocab_size);
    DecodeConfig dc;
    dc.beam_size = 16;  // covers every candidate of the depth-2 tree
    dc.alpha = 0.6;
    dc.max_len_a = 2;
    dc.max_len_b = 0;
    auto res = beam_decode_sentence(w, src, dc);

    auto all = oracle_enumerate(w, src, 2, dc.alpha);
    REQUIRE(!all.empty());
    const testutil::EnumeratedHyp* best = &all[0];
    for (const auto& h : all) {
      if (h.score > best->score ||
          (h.score == best->score &&
           std::lexicographical_compare(h.tokens.begin(), h.tokens.end(), best->tokens.begin(),
                                        best->tokens.end()))) {
        best = &h;
      }
    }
    CHECK(res.best.score == doctest::Approx(best->score).epsilon(1e-6));
    CHECK(res.best.tokens == best->tokens);

    // monotone score contract over the recorded finished pool
    for (const auto& f : res.finished_pool) CHECK(res.best.score >= f.score - 1e-12);
  }
}

TEST_CASE("hypothesis contracts: ends with eos or max length, no pad/bos inside") {
  for (uint64_t seed = 0; seed < 6; ++seed) {
    auto cfg = tiny_config(StackingMode::recurrent(2), 9, 8, 16, 2);
    auto w = build_model<float>(cfg, 500 + seed);
    Rng rng(seed);
    auto src = random_sentence_ids(rng, 2, 5, cfg.src_vocab_size);
    DecodeConfig dc;
    dc.beam_size = 4;
    dc.max_len_a = 4;
    dc.max_len_b = 1;
    int64_t max_len = dc.max_len_a + dc.max_len_b * (static_cast<int64_t>(src.size()) - 2);
    auto res = beam_decode_sentence(w, src, dc);
    for (const auto& h : res.finished_pool) {
      CHECK((h.ended_with_eos || static_cast<int64_t>(h.tokens.size()) == max_len));
      for (int32_t t : h.tokens) {
        CHECK(t != kPadId);
        CHECK(t != kBosId);
        CHECK(t != kEosId);
      }
    }
  }
}

TEST_CASE("decode-recurrence override at the training depth is bit-identical") {
  auto cfg = tiny_config(StackingMode::recurrent(3));
  auto w = build_model<float>(cfg, 12);
  Rng rng(13);
  auto src = random_sentence_ids(rng, 3, 6, cfg.src_vocab_size);
  DecodeConfig plain;
  DecodeConfig forced = plain;
  forced.enc_recurrences = 3;
  forced.dec_recurrences = 3;
  auto a = beam_decode_sentence(w, src, plain);
  auto b = beam_decode_sentence(w, src, forced);
  CHECK(a.best.tokens == b.best.tokens);
  CHECK(a.best.logprob == b.best.logprob);
  CHECK(a.best.score == b.best.score);

  // and a different override changes the computation path
  DecodeConfig shallow = plain;
  shallow.dec_recurrences = 1;
  CHECK_NOTHROW(beam_decode_sentence(w, src, shallow));
}

TEST_CASE("vanilla models reject recurrence overrides at decode time") {
  auto cfg = tiny_config(StackingMode::vanilla(2, 2));
  auto w = build_model<float>(cfg, 3);
  DecodeConfig dc;
  dc.dec_recurrences = 2;  // even the matching value is an override here
  CHECK_THROWS_AS(greedy_decode_sentence(w, {kBosId, 5, kEosId}, dc), ConfigError);
  DecodeConfig enc_only;
  enc_only.enc_recurrences = 1;
  CHECK_THROWS_AS(beam_decode_sentence(w, {kBosId, 5, kEosId}, enc_only), ConfigError);
}

TEST_CASE("recurrence sweep shapes and guards") {
  auto cfg = tiny_config(StackingMode::recurrent(2));
  cfg.share_src_tgt_embedding = false;
  auto w = build_model<float>(cfg, 30);

  // a vocabulary of exactly the model size (9 word types + 4 reserved)
  std::vector<std::string> lines = {"w04 w05 w06 w07 w08 w09 w10 w11 w12"};
  Vocabulary vocab = Vocabulary::build(lines, static_cast<size_t>(cfg.src_vocab_size));
  REQUIRE(vocab.size() == static_cast<size_t>(cfg.src_vocab_size));

  std::vector<std::string> src = {"w04 w05", "w06 w07 w08"};
  std::vector<std::string> ref = {"w05 w04", "w08 w07 w06"};
  DecodeConfig dc;
  dc.max_len_a = 6;
  auto rows = recurrence_sweep(w, vocab, vocab, src, ref, {1, 2, 3, 4, 5, 6, 7, 8}, dc, true);
  CHECK(rows.size() == 8);
  for (size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].dec_recurrences == static_cast<int>(i + 1));

  // the row at the training depth equals a plain decode
  DecodeConfig plain;
  plain.max_len_a = 6;
  std::vector<std::vector<int32_t>> ids;
  for (const auto& s : src) ids.push_back(vocab.encode(s));
  auto direct = decode_corpus(w, ids, plain, true);
  std::vector<std::string> direct_lines;
  for (const auto& h : direct.hyps) direct_lines.push_back(vocab.decode(h.tokens));
  auto report = corpus_bleu_lines(direct_lines, ref);
  CHECK(rows[1].bleu == doctest::Approx(report.bleu).epsilon(1e-12));

  auto vw = build_model<float>(tiny_config(StackingMode::vanilla(2, 2)), 3);
  CHECK_THROWS_AS(recurrence_sweep(vw, vocab, vocab, src, ref, {1}, dc, true), ConfigError);
}
