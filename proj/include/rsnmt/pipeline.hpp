#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rsnmt/decoding.hpp"
#include "rsnmt/model_dir.hpp"
#include "rsnmt/training.hpp"
#include "rsnmt/transfer.hpp"

namespace rsnmt {

struct TeacherInit {
  std::string teacher_dir;  // model directory; its vocabularies are reused
  int l_enc = 1;
  int l_dec = 1;
  bool copy_embeddings = true;
  bool copy_output_projection = true;
};

struct TrainJob {
  ModelConfig model;  // vocab sizes filled from the built vocabularies
  TrainConfig train;
  int64_t batch_tokens = 2000;
  size_t vocab_max = 16000;
  double train_fraction = 1.0;
  std::optional<TeacherInit> init;
  std::string out_dir;
  // When the corpus came out of `distill`, its teacher is recorded here so
  // the checkpoint header carries the lineage.
  std::optional<std::string> distilled_from;
};

struct TrainOutcome {
  std::string checkpoint_path;
  std::string out_dir;
  std::vector<float> losses;
  ModelConfig resolved_config;
};

TrainOutcome run_training(TrainJob job, const ParallelCorpus& corpus);

// File variant; detects a distill report.json next to the source file and
// records the lineage automatically.
TrainOutcome run_training_files(TrainJob job, const std::string& src_path,
                                const std::string& tgt_path);

LoadedModel load_model_dir(const std::string& dir);

std::vector<std::string> translate_lines(const LoadedModel& model,
                                         const std::vector<std::string>& input,
                                         const DecodeConfig& cfg, bool greedy);

}  // namespace rsnmt
