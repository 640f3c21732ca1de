#include "rsnmt/config_json.hpp"

#include <fstream>

#include "rsnmt/training.hpp"

namespace rsnmt {

OrderedJson stacking_to_json(const StackingMode& s) {
  OrderedJson j;
  if (s.is_recurrent()) {
    j["mode"] = "recurrent";
    j["recurrences"] = s.recurrences;
  } else {
    j["mode"] = "vanilla";
    j["encoder_layers"] = s.encoder_layers;
    j["decoder_layers"] = s.decoder_layers;
  }
  return j;
}

StackingMode stacking_from_json(const OrderedJson& j) {
  std::string mode = j.at("mode").get<std::string>();
  if (mode == "recurrent") return StackingMode::recurrent(j.at("recurrences").get<int>());
  if (mode == "vanilla") {
    return StackingMode::vanilla(j.at("encoder_layers").get<int>(),
                                 j.at("decoder_layers").get<int>());
  }
  throw FormatError("stacking: unknown mode '" + mode + "'");
}

OrderedJson model_config_to_json(const ModelConfig& c) {
  OrderedJson j;
  j["d_model"] = c.d_model;
  j["d_ff"] = c.d_ff;
  j["n_heads"] = c.n_heads;
  j["stacking"] = stacking_to_json(c.stacking);
  j["src_vocab_size"] = c.src_vocab_size;
  j["tgt_vocab_size"] = c.tgt_vocab_size;
  j["share_src_tgt_embedding"] = c.share_src_tgt_embedding;
  j["tie_output_projection"] = c.tie_output_projection;
  j["dropout"] = c.dropout;
  j["max_positions"] = c.max_positions;
  return j;
}

ModelConfig model_config_from_json(const OrderedJson& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.stacking = stacking_from_json(j.at("stacking"));
  c.src_vocab_size = j.value("src_vocab_size", 0);
  c.tgt_vocab_size = j.value("tgt_vocab_size", 0);
  c.share_src_tgt_embedding = j.value("share_src_tgt_embedding", false);
  c.tie_output_projection = j.value("tie_output_projection", false);
  c.dropout = j.value("dropout", 0.0);
  c.max_positions = j.value("max_positions", 256);
  return c;
}

OrderedJson train_config_to_json(const TrainConfig& c) {
  OrderedJson j;
  j["total_steps"] = c.total_steps;
  j["warmup_steps"] = c.warmup_steps;
  j["base_lr"] = c.base_lr;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["label_smoothing"] = c.label_smoothing;
  j["checkpoint_every"] = c.checkpoint_every;
  j["keep_last"] = c.keep_last;
  j["seed"] = c.seed;
  return j;
}

TrainConfig train_config_from_json(const OrderedJson& j) {
  TrainConfig c;
  c.total_steps = j.value("total_steps", c.total_steps);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.base_lr = j.value("base_lr", c.base_lr);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.keep_last = j.value("keep_last", c.keep_last);
  c.seed = j.value("seed", c.seed);
  return c;
}

OrderedJson read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  OrderedJson j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::string& path, const OrderedJson& j) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace rsnmt
