#pragma once

#include <string>

#include "rsnmt/checkpoint.hpp"
#include "rsnmt/data.hpp"

namespace rsnmt {

// A trained model lives in a directory: checkpoint.rsnmt + src.vocab +
// tgt.vocab (plus config.json and logs written by training).
constexpr const char* kCheckpointFile = "checkpoint.rsnmt";
constexpr const char* kSrcVocabFile = "src.vocab";
constexpr const char* kTgtVocabFile = "tgt.vocab";

struct LoadedModel {
  ModelWeights<float> weights;
  Vocabulary src_vocab;
  Vocabulary tgt_vocab;
};

LoadedModel load_model_dir(const std::string& dir);

}  // namespace rsnmt
