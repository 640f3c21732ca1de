#pragma once

#include <string>

#include <json.hpp>

#include "rsnmt/model.hpp"

namespace rsnmt {

// One JSON schema is used for config files, checkpoint headers, and the
// resolved-config echo: field names mirror the structs exactly.
using OrderedJson = nlohmann::ordered_json;

OrderedJson stacking_to_json(const StackingMode& s);
StackingMode stacking_from_json(const OrderedJson& j);

OrderedJson model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const OrderedJson& j);

struct TrainConfig;
OrderedJson train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const OrderedJson& j);

OrderedJson read_json_file(const std::string& path);
void write_json_file(const std::string& path, const OrderedJson& j);

}  // namespace rsnmt
