#include "rsnmt/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace rsnmt {

namespace {

void write_u32_le(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError("checkpoint: truncated header length");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

Checkpoint checkpoint_from_weights(const ModelWeights<float>& w, int64_t step,
                                   OrderedJson provenance) {
  Checkpoint c;
  c.config = w.config;
  c.step = step;
  c.provenance = std::move(provenance);
  for (const auto& [name, t] : w.named_parameters()) {
    c.arrays.push_back({name, t->shape, t->data});
  }
  return c;
}

ModelWeights<float> Checkpoint::to_weights() const {
  auto w = build_model<float>(config, 0);
  auto params = w.named_parameters();
  if (params.size() != arrays.size()) {
    throw FormatError("checkpoint: expected " + std::to_string(params.size()) +
                      " arrays for this config, file has " + std::to_string(arrays.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].first != arrays[i].name) {
      throw FormatError("checkpoint: array '" + arrays[i].name + "' where '" + params[i].first +
                        "' was expected");
    }
    if (params[i].second->shape != arrays[i].shape) {
      throw FormatError("checkpoint: array '" + arrays[i].name + "' has shape " +
                        shape_str(arrays[i].shape) + ", model expects " +
                        shape_str(params[i].second->shape));
    }
    params[i].second->data = arrays[i].data;
  }
  return w;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  OrderedJson header;
  header["config"] = model_config_to_json(ckpt.config);
  header["step"] = ckpt.step;
  header["precision"] = "f32";
  if (!ckpt.provenance.empty()) header["provenance"] = ckpt.provenance;
  OrderedJson manifest = OrderedJson::array();
  uint64_t offset = 0;
  for (const auto& a : ckpt.arrays) {
    OrderedJson entry;
    entry["name"] = a.name;
    entry["shape"] = a.shape;
    entry["offset"] = offset;
    manifest.push_back(entry);
    offset += a.data.size() * sizeof(float);
  }
  header["arrays"] = manifest;
  std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("checkpoint: cannot write " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_u32_le(out, static_cast<uint32_t>(header_str.size()));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& a : ckpt.arrays) {
    out.write(reinterpret_cast<const char*>(a.data.data()),
              static_cast<std::streamsize>(a.data.size() * sizeof(float)));
  }
  if (!out) throw FormatError("checkpoint: write failed for " + path);
}

void save_checkpoint(const std::string& path, const ModelWeights<float>& w, int64_t step,
                     OrderedJson provenance) {
  save_checkpoint(path, checkpoint_from_weights(w, step, std::move(provenance)));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open " + path);
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw FormatError("checkpoint: bad magic bytes in " + path);
  }
  uint32_t header_len = read_u32_le(in);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), header_len);
  if (!in) throw FormatError("checkpoint: truncated header in " + path);
  OrderedJson header;
  try {
    header = OrderedJson::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint: invalid header JSON in " + path + ": " + e.what());
  }
  if (header.value("precision", "") != "f32") {
    throw FormatError("checkpoint: unsupported precision '" + header.value("precision", "") +
                      "' in " + path);
  }

  Checkpoint c;
  c.config = model_config_from_json(header.at("config"));
  c.step = header.at("step").get<int64_t>();
  c.provenance = header.value("provenance", OrderedJson::object());
  for (const auto& entry : header.at("arrays")) {
    NamedArray a;
    a.name = entry.at("name").get<std::string>();
    a.shape = entry.at("shape").get<std::vector<int64_t>>();
    int64_t n = 1;
    for (int64_t d : a.shape) n *= d;
    a.data.resize(static_cast<size_t>(n));
    in.read(reinterpret_cast<char*>(a.data.data()),
            static_cast<std::streamsize>(a.data.size() * sizeof(float)));
    if (!in) throw FormatError("checkpoint: truncated array '" + a.name + "' in " + path);
    c.arrays.push_back(std::move(a));
  }
  return c;
}

namespace {

bool same_structure(const ModelConfig& a, const ModelConfig& b) {
  return model_config_to_json(a) == model_config_to_json(b);
}

}  // namespace

ModelWeights<float> load_weights(const std::string& path, const ModelConfig& expected) {
  auto ckpt = load_checkpoint(path);
  if (!same_structure(ckpt.config, expected)) {
    throw ConfigError("checkpoint " + path +
                      " does not match the expected model config (stacking mode, widths, or "
                      "vocabularies differ); use layer transfer to move weights across modes");
  }
  return ckpt.to_weights();
}

ModelWeights<float> load_weights(const std::string& path) {
  return load_checkpoint(path).to_weights();
}

Checkpoint average_checkpoints(const std::vector<std::string>& paths) {
  if (paths.empty()) throw ConfigError("average: no checkpoints given");
  std::vector<Checkpoint> ckpts;
  ckpts.reserve(paths.size());
  for (const auto& p : paths) ckpts.push_back(load_checkpoint(p));

  const Checkpoint& first = ckpts.front();
  for (size_t i = 1; i < ckpts.size(); ++i) {
    if (!same_structure(ckpts[i].config, first.config)) {
      throw ConfigError("average: " + paths[i] + " has a different model config than " + paths[0]);
    }
    if (ckpts[i].arrays.size() != first.arrays.size()) {
      throw ConfigError("average: " + paths[i] + " has a different array manifest than " +
                        paths[0]);
    }
    for (size_t a = 0; a < first.arrays.size(); ++a) {
      if (ckpts[i].arrays[a].name != first.arrays[a].name ||
          ckpts[i].arrays[a].shape != first.arrays[a].shape) {
        throw ConfigError("average: array '" + ckpts[i].arrays[a].name + "' in " + paths[i] +
                          " does not match '" + first.arrays[a].name + "' " +
                          shape_str(first.arrays[a].shape));
      }
    }
  }

  Checkpoint out;
  out.config = first.config;
  out.provenance = first.provenance;
  for (const auto& c : ckpts) out.step = std::max(out.step, c.step);
  double inv_n = 1.0 / static_cast<double>(ckpts.size());
  for (size_t a = 0; a < first.arrays.size(); ++a) {
    NamedArray avg;
    avg.name = first.arrays[a].name;
    avg.shape = first.arrays[a].shape;
    avg.data.resize(first.arrays[a].data.size());
    for (size_t i = 0; i < avg.data.size(); ++i) {
      double acc = 0.0;
      for (const auto& c : ckpts) acc += static_cast<double>(c.arrays[a].data[i]);
      avg.data[i] = static_cast<float>(acc * inv_n);
    }
    out.arrays.push_back(std::move(avg));
  }
  return out;
}

}  // namespace rsnmt
