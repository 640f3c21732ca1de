#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rsnmt/data.hpp"
#include "rsnmt/model.hpp"

namespace rsnmt {

struct TrainConfig {
  int64_t total_steps = 1000;
  int64_t warmup_steps = 4000;
  double base_lr = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  double label_smoothing = 0.1;
  int64_t checkpoint_every = 0;  // 0: only the final checkpoint is written
  int keep_last = 10;
  uint64_t seed = 1;

  void validate() const {
    if (total_steps < 1) throw ConfigError("train: total_steps must be >= 1");
    if (warmup_steps < 1) throw ConfigError("train: warmup_steps must be >= 1");
    if (keep_last < 1) throw ConfigError("train: keep_last must be >= 1");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
      throw ConfigError("train: label_smoothing must be in [0, 1)");
    }
  }
};

// Inverse-square-root schedule with linear warmup:
// base_lr * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)
double lr_at(int64_t step, const TrainConfig& cfg, int d_model);

// Adam moments, aligned index-for-index with ModelWeights::named_parameters().
struct AdamState {
  std::vector<std::vector<float>> m, v;
  int64_t t = 0;
};

AdamState make_adam_state(const ModelWeights<float>& w);

// One teacher-forced step: forward on (src, tgt) with the target shifted
// right, backward, Adam update at the schedule's current lr. Returns the
// loss. Throws TrainError when the loss goes non-finite.
float train_step(ModelWeights<float>& w, const Batch& src, const Batch& tgt, AdamState& opt,
                 const TrainConfig& cfg, int64_t schedule_step, Rng* dropout_rng = nullptr);

// Teacher-forced view of a target batch: decoder input drops the last
// column, labels drop the first.
std::pair<Batch, std::vector<int32_t>> shift_targets(const Batch& tgt);

}  // namespace rsnmt
