#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rsnmt/data.hpp"

namespace rsnmt {

// Synthetic corpora so experiments need no external data:
//   copy     target = source
//   reverse  target = source reversed
//   lexicon  word-for-word mapping into a disjoint target vocabulary; a
//            fraction of source words is ambiguous and picks a secondary
//            translation 30% of the time (noise a teacher can denoise)
struct ToySpec {
  std::string task = "reverse";
  int n_train = 2000;
  int n_test = 200;
  int n_mono = 0;   // extra target-side monolingual sentences
  int vocab = 50;   // source word types
  int min_len = 4;
  int max_len = 12;
  double ambiguity = 0.25;  // lexicon only: fraction of ambiguous words
  uint64_t seed = 7;
};

struct ToyData {
  ParallelCorpus train;
  ParallelCorpus test;  // disjoint from train on the source side
  std::vector<std::string> mono;
};

ToyData gen_toy(const ToySpec& spec);

// Writes train.src/train.tgt/test.src/test.tgt (and mono.txt when n_mono > 0).
void write_toy(const ToyData& data, const std::string& dir);

}  // namespace rsnmt
