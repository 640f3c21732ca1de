#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rsnmt/data.hpp"
#include "rsnmt/model.hpp"

namespace rsnmt {

struct DecodeConfig {
  int beam_size = 4;
  double alpha = 0.6;            // length-penalty exponent
  int max_len_a = 10;            // max length = a + b * source length
  int max_len_b = 2;
  std::optional<int> enc_recurrences;
  std::optional<int> dec_recurrences;
  bool capture_attention = false;
  bool timing = false;

  void validate() const {
    if (beam_size < 1) throw ConfigError("decode: beam_size must be >= 1");
    if (alpha < 0.0) throw ConfigError("decode: alpha must be >= 0");
    if (enc_recurrences && *enc_recurrences < 1) throw ConfigError("decode: enc recurrences must be >= 1");
    if (dec_recurrences && *dec_recurrences < 1) throw ConfigError("decode: dec recurrences must be >= 1");
  }
};

// GNMT form ((5 + length) / 6)^alpha.
double length_penalty(int64_t length, double alpha);

// One finished hypothesis. `tokens` excludes bos; `length` counts the
// generated tokens including eos (the autoregressive steps taken) and is
// what the length penalty sees. Generated eos itself is not kept in tokens.
struct Hypothesis {
  std::vector<int32_t> tokens;
  double logprob = 0.0;
  double score = 0.0;  // logprob / length_penalty(length, alpha)
  int64_t length = 0;
  bool ended_with_eos = false;
};

struct SentenceResult {
  Hypothesis best;
  std::vector<Hypothesis> finished_pool;  // every finished hypothesis the search saw
  std::optional<AttentionTrace> trace;    // cross-attention, teacher-forced over the output
};

SentenceResult greedy_decode_sentence(const ModelWeights<float>& w,
                                      const std::vector<int32_t>& src_ids,
                                      const DecodeConfig& cfg);

SentenceResult beam_decode_sentence(const ModelWeights<float>& w,
                                    const std::vector<int32_t>& src_ids, const DecodeConfig& cfg);

struct CorpusDecodeResult {
  std::vector<Hypothesis> hyps;                      // input order
  std::vector<std::optional<AttentionTrace>> traces; // filled when capturing
  double wall_seconds = 0.0;                         // filled when cfg.timing
};

// Decodes every sentence; greedy when `greedy` or beam_size == 1 with the
// greedy path requested explicitly by the caller.
CorpusDecodeResult decode_corpus(const ModelWeights<float>& w,
                                 const std::vector<std::vector<int32_t>>& src_id_seqs,
                                 const DecodeConfig& cfg, bool greedy);

struct SweepRow {
  int dec_recurrences = 0;
  double bleu = 0.0;
  double seconds = 0.0;
};

// Decode + BLEU per decoder-recurrence value; encoder depth stays at the
// training value. Recurrent-mode models only.
std::vector<SweepRow> recurrence_sweep(const ModelWeights<float>& w, const Vocabulary& src_vocab,
                                       const Vocabulary& tgt_vocab,
                                       const std::vector<std::string>& src_lines,
                                       const std::vector<std::string>& ref_lines,
                                       const std::vector<int>& dec_recurrence_values,
                                       const DecodeConfig& cfg, bool greedy);

}  // namespace rsnmt
