#include "rsnmt/model.hpp"

namespace rsnmt {

int64_t count_parameters(const ModelConfig& config) {
  config.validate();
  int64_t d = config.d_model, ff = config.d_ff;
  int64_t attn = 4 * d * d;
  int64_t ffn = d * ff + ff + ff * d + d;
  int64_t ln = 2 * d;
  int64_t enc_layer = attn + ffn + 2 * ln;
  int64_t dec_layer = 2 * attn + ffn + 3 * ln;
  int64_t n_enc = config.stacking.is_recurrent() ? 1 : config.stacking.encoder_layers;
  int64_t n_dec = config.stacking.is_recurrent() ? 1 : config.stacking.decoder_layers;

  int64_t total = static_cast<int64_t>(config.src_vocab_size) * d;
  if (!config.share_src_tgt_embedding) total += static_cast<int64_t>(config.tgt_vocab_size) * d;
  total += n_enc * enc_layer + n_dec * dec_layer;
  if (!config.tie_output_projection) total += d * static_cast<int64_t>(config.tgt_vocab_size);
  return total;
}

}  // namespace rsnmt
