#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rsnmt/config_json.hpp"
#include "rsnmt/model.hpp"

namespace rsnmt {

// On-disk layout: magic "RSNMT1", u32 little-endian header length, UTF-8
// JSON header (config, step, precision, array manifest, optional
// provenance), then the raw little-endian float32 arrays in manifest order.
constexpr char kCheckpointMagic[6] = {'R', 'S', 'N', 'M', 'T', '1'};

struct NamedArray {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<float> data;
};

struct Checkpoint {
  ModelConfig config;
  int64_t step = 0;
  OrderedJson provenance;  // teacher lineage etc.; empty object when none
  std::vector<NamedArray> arrays;

  ModelWeights<float> to_weights() const;
};

Checkpoint checkpoint_from_weights(const ModelWeights<float>& w, int64_t step,
                                   OrderedJson provenance = OrderedJson::object());

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
void save_checkpoint(const std::string& path, const ModelWeights<float>& w, int64_t step,
                     OrderedJson provenance = OrderedJson::object());

Checkpoint load_checkpoint(const std::string& path);

// Loads and checks the stored config against an expected one; a Vanilla
// checkpoint cannot be loaded into a Recurrent config this way (layer
// transfer is the supported route).
ModelWeights<float> load_weights(const std::string& path, const ModelConfig& expected);
ModelWeights<float> load_weights(const std::string& path);

// Elementwise arithmetic mean of every weight array (accumulated in double);
// step is the max input step. All inputs must share config and manifest.
Checkpoint average_checkpoints(const std::vector<std::string>& paths);

}  // namespace rsnmt
