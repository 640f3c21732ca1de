#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rsnmt/common.hpp"

namespace rsnmt {

constexpr int32_t kPadId = 0;
constexpr int32_t kBosId = 1;
constexpr int32_t kEosId = 2;
constexpr int32_t kUnkId = 3;
constexpr int32_t kNumReserved = 4;

inline bool is_reserved_id(int32_t id) { return id >= 0 && id < kNumReserved; }

std::vector<std::string> tokenize(const std::string& text);
std::string join_tokens(const std::vector<std::string>& tokens);

// Token <-> id mapping with fixed reserved ids pad=0, bos=1, eos=2, unk=3.
class Vocabulary {
 public:
  Vocabulary();

  // Most frequent tokens kept up to max_size (reserved ids included in the
  // cap); frequency ties broken lexicographically.
  static Vocabulary build(const std::vector<std::string>& sentences, size_t max_size);

  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int32_t id(const std::string& token) const;  // unk for unknown tokens
  const std::string& token(int32_t id) const;
  size_t size() const { return tokens_.size(); }

  // bos ... eos, OOV mapped to unk.
  std::vector<int32_t> encode(const std::string& text) const;
  // Inverse mapping; reserved ids are stripped.
  std::string decode(std::span<const int32_t> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int32_t> index_;
  void push(const std::string& token);
};

// Line-aligned sentence pairs, stored as raw whitespace-token text.
struct ParallelCorpus {
  std::vector<std::string> src;
  std::vector<std::string> tgt;

  size_t size() const { return src.size(); }
  void push(std::string s, std::string t) {
    src.push_back(std::move(s));
    tgt.push_back(std::move(t));
  }
};

// Loads two line-aligned files; pairs with an empty side are filtered out.
ParallelCorpus load_parallel(const std::string& src_path, const std::string& tgt_path);
std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

// Padded id matrix with mask; mask is true exactly on non-pad positions.
struct Batch {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<int32_t> ids;     // rows x cols
  std::vector<uint8_t> mask;    // rows x cols
  std::vector<int32_t> lengths;

  int32_t at(int64_t r, int64_t c) const { return ids[static_cast<size_t>(r * cols + c)]; }
};

Batch make_batch(const std::vector<std::vector<int32_t>>& seqs);

using EncodedPair = std::pair<std::vector<int32_t>, std::vector<int32_t>>;

// Length-bucketed batches under a padded-token budget; batch order shuffled
// by seed; every sentence appears exactly once.
std::vector<std::pair<Batch, Batch>> make_batches(const std::vector<EncodedPair>& pairs,
                                                  int64_t batch_size_tokens, uint64_t seed,
                                                  int64_t max_positions);

std::vector<EncodedPair> encode_corpus(const ParallelCorpus& corpus, const Vocabulary& src_vocab,
                                       const Vocabulary& tgt_vocab);

// Deterministic uniform sample without replacement of ceil(fraction * n)
// pairs, original order preserved.
ParallelCorpus subsample(const ParallelCorpus& corpus, double fraction, uint64_t seed);

}  // namespace rsnmt
