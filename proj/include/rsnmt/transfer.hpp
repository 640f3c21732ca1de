#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rsnmt/config_json.hpp"
#include "rsnmt/decoding.hpp"
#include "rsnmt/model_dir.hpp"

namespace rsnmt {

struct TransferConfig {
  std::string teacher_checkpoint;
  int l_enc = 1;  // 1-based indices into the teacher's stacks
  int l_dec = 1;
  bool copy_embeddings = true;
  bool copy_output_projection = true;
};

struct TransferResult {
  ModelWeights<float> weights;
  OrderedJson provenance;  // teacher path, layer indices, copy flags
};

// Initializes a Recurrent student from a Vanilla teacher: the student's
// single encoder/decoder layer becomes a value copy of teacher layer
// l_enc/l_dec; embeddings and output projection copy when flagged and a
// same-shaped counterpart exists. Everything else is freshly initialized
// from `seed`. The teacher file is only read.
TransferResult init_from_teacher(const ModelConfig& student_config, const TransferConfig& t,
                                 uint64_t seed);

struct DistillConfig {
  DecodeConfig decode;       // teacher generation settings (beam/alpha)
  bool mix_original = false; // back-translation: prepend the original corpus
  int sample_size = 1000;    // similarity-report sample
  uint64_t seed = 1;
};

struct DistillReport {
  int64_t requested = 0;
  int64_t produced = 0;
  std::vector<int64_t> skipped;  // input indices that failed to decode
  double sample_bleu = -1.0;     // -1 when no references were available
  int64_t sample_size = 0;
  uint64_t seed = 0;
  OrderedJson to_json(const std::string& teacher_dir) const;
};

// Pseudo-parallel corpus (source, teacher translation). References, when
// given, feed the similarity report: BLEU of a seeded random sample of
// pseudo-targets against them.
ParallelCorpus distill_corpus(const LoadedModel& teacher,
                              const std::vector<std::string>& sources, const DistillConfig& cfg,
                              const std::vector<std::string>* references, DistillReport* report);

// Pseudo pairs (reverse translation, monolingual sentence): the monolingual
// text lands on the target side. With mix_original the original corpus comes
// first, then the pseudo pairs.
ParallelCorpus back_translate(const LoadedModel& reverse_model,
                              const std::vector<std::string>& mono_target_side,
                              const DistillConfig& cfg, const ParallelCorpus* original,
                              DistillReport* report);

}  // namespace rsnmt
