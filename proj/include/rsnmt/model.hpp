#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rsnmt/data.hpp"
#include "rsnmt/ops.hpp"
#include "rsnmt/tensor.hpp"

namespace rsnmt {

// Vanilla(N, M): N independent encoder layers, M independent decoder layers.
// Recurrent(k): one shared layer per side applied k times.
struct StackingMode {
  enum class Kind { Vanilla, Recurrent };
  Kind kind = Kind::Recurrent;
  int encoder_layers = 1;
  int decoder_layers = 1;
  int recurrences = 1;

  static StackingMode vanilla(int n, int m) {
    StackingMode s;
    s.kind = Kind::Vanilla;
    s.encoder_layers = n;
    s.decoder_layers = m;
    return s;
  }
  static StackingMode recurrent(int k) {
    StackingMode s;
    s.kind = Kind::Recurrent;
    s.recurrences = k;
    return s;
  }
  bool is_recurrent() const { return kind == Kind::Recurrent; }
};

struct ModelConfig {
  int d_model = 64;
  int d_ff = 256;
  int n_heads = 4;
  StackingMode stacking = StackingMode::recurrent(1);
  int src_vocab_size = 0;
  int tgt_vocab_size = 0;
  bool share_src_tgt_embedding = false;
  bool tie_output_projection = false;
  double dropout = 0.0;
  int max_positions = 256;

  void validate() const {
    if (d_model <= 0 || d_ff <= 0 || n_heads <= 0) throw ConfigError("model: widths must be positive");
    if (d_model % n_heads != 0) {
      throw ConfigError("model: d_model " + std::to_string(d_model) + " not divisible by " +
                        std::to_string(n_heads) + " heads");
    }
    if (src_vocab_size <= 0 || tgt_vocab_size <= 0) {
      throw ConfigError("model: vocabulary sizes must be positive");
    }
    if (share_src_tgt_embedding && src_vocab_size != tgt_vocab_size) {
      throw ConfigError("model: shared embeddings require equal vocabulary sizes");
    }
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must be in [0, 1)");
    if (max_positions <= 0) throw ConfigError("model: max_positions must be positive");
    if (stacking.is_recurrent()) {
      if (stacking.recurrences < 1) throw ConfigError("model: recurrences must be >= 1");
    } else {
      if (stacking.encoder_layers < 1 || stacking.decoder_layers < 1) {
        throw ConfigError("model: layer counts must be >= 1");
      }
    }
  }
};

template <class T>
struct AttentionWeights {
  TensorPtr<T> wq, wk, wv, wo;  // each [d_model, d_model], no bias
};

template <class T>
struct LayerNormWeights {
  TensorPtr<T> gain, bias;
};

template <class T>
struct LayerWeights {
  AttentionWeights<T> self_attn;
  std::optional<AttentionWeights<T>> cross_attn;  // decoder layers only
  TensorPtr<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  LayerNormWeights<T> ln_self, ln_cross, ln_ffn;  // ln_cross null for encoder
};

// Per-recurrence, per-head attention rows captured during a forward pass.
// Only defined for batch size 1.
struct AttentionTrace {
  std::string sentence;
  std::vector<std::string> src_tokens;
  struct Head {
    std::vector<std::vector<double>> rows;  // [query positions][key positions]
  };
  struct Layer {
    std::vector<Head> heads;
  };
  std::vector<Layer> layers;

  bool empty() const { return layers.empty(); }
};

template <class T>
struct ModelWeights {
  ModelConfig config;
  TensorPtr<T> src_embedding;  // [src_vocab, d_model]
  TensorPtr<T> tgt_embedding;  // same tensor as src_embedding when shared
  std::vector<T> positional;   // [max_positions, d_model], sinusoidal, not trained
  std::vector<LayerWeights<T>> encoder_layers;  // 1 in Recurrent mode, N in Vanilla
  std::vector<LayerWeights<T>> decoder_layers;
  TensorPtr<T> output_projection;  // [d_model, tgt_vocab]; == tgt_embedding when tied

  // Unique trainable tensors in a fixed order; aliased tensors appear once.
  std::vector<std::pair<std::string, TensorPtr<T>>> named_parameters() const;
};

namespace detail_model {

template <class T>
void layer_param_names(const LayerWeights<T>& lw, const std::string& prefix,
                       std::vector<std::pair<std::string, TensorPtr<T>>>& out) {
  out.emplace_back(prefix + ".self_attn.wq", lw.self_attn.wq);
  out.emplace_back(prefix + ".self_attn.wk", lw.self_attn.wk);
  out.emplace_back(prefix + ".self_attn.wv", lw.self_attn.wv);
  out.emplace_back(prefix + ".self_attn.wo", lw.self_attn.wo);
  if (lw.cross_attn) {
    out.emplace_back(prefix + ".cross_attn.wq", lw.cross_attn->wq);
    out.emplace_back(prefix + ".cross_attn.wk", lw.cross_attn->wk);
    out.emplace_back(prefix + ".cross_attn.wv", lw.cross_attn->wv);
    out.emplace_back(prefix + ".cross_attn.wo", lw.cross_attn->wo);
  }
  out.emplace_back(prefix + ".ffn.w1", lw.ffn_w1);
  out.emplace_back(prefix + ".ffn.b1", lw.ffn_b1);
  out.emplace_back(prefix + ".ffn.w2", lw.ffn_w2);
  out.emplace_back(prefix + ".ffn.b2", lw.ffn_b2);
  out.emplace_back(prefix + ".ln_self.gain", lw.ln_self.gain);
  out.emplace_back(prefix + ".ln_self.bias", lw.ln_self.bias);
  if (lw.cross_attn) {
    out.emplace_back(prefix + ".ln_cross.gain", lw.ln_cross.gain);
    out.emplace_back(prefix + ".ln_cross.bias", lw.ln_cross.bias);
  }
  out.emplace_back(prefix + ".ln_ffn.gain", lw.ln_ffn.gain);
  out.emplace_back(prefix + ".ln_ffn.bias", lw.ln_ffn.bias);
}

}  // namespace detail_model

template <class T>
std::vector<std::pair<std::string, TensorPtr<T>>> ModelWeights<T>::named_parameters() const {
  std::vector<std::pair<std::string, TensorPtr<T>>> out;
  out.emplace_back("src_embedding", src_embedding);
  if (tgt_embedding != src_embedding) out.emplace_back("tgt_embedding", tgt_embedding);
  for (size_t i = 0; i < encoder_layers.size(); ++i) {
    detail_model::layer_param_names(encoder_layers[i], "encoder." + std::to_string(i), out);
  }
  for (size_t i = 0; i < decoder_layers.size(); ++i) {
    detail_model::layer_param_names(decoder_layers[i], "decoder." + std::to_string(i), out);
  }
  if (output_projection != tgt_embedding) out.emplace_back("output_projection", output_projection);
  return out;
}

// ------------------------------------------------------------- construction

namespace detail_model {

template <class T>
TensorPtr<T> glorot(std::vector<int64_t> shape, Rng& rng) {
  double fan_in = static_cast<double>(shape[0]);
  double fan_out = static_cast<double>(shape.back());
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  return uniform<T>(std::move(shape), rng, -limit, limit, /*requires_grad=*/true);
}

template <class T>
LayerNormWeights<T> make_ln(int64_t d) {
  return {full<T>({d}, T(1), true), zeros<T>({d}, true)};
}

template <class T>
AttentionWeights<T> make_attention(int64_t d, Rng& rng) {
  return {glorot<T>({d, d}, rng), glorot<T>({d, d}, rng), glorot<T>({d, d}, rng),
          glorot<T>({d, d}, rng)};
}

template <class T>
LayerWeights<T> make_layer(const ModelConfig& cfg, bool decoder, Rng& rng) {
  int64_t d = cfg.d_model, ff = cfg.d_ff;
  LayerWeights<T> lw;
  lw.self_attn = make_attention<T>(d, rng);
  if (decoder) lw.cross_attn = make_attention<T>(d, rng);
  lw.ffn_w1 = glorot<T>({d, ff}, rng);
  lw.ffn_b1 = zeros<T>({ff}, true);
  lw.ffn_w2 = glorot<T>({ff, d}, rng);
  lw.ffn_b2 = zeros<T>({d}, true);
  lw.ln_self = make_ln<T>(d);
  if (decoder) lw.ln_cross = make_ln<T>(d);
  lw.ln_ffn = make_ln<T>(d);
  return lw;
}

template <class T>
std::vector<T> sinusoidal_table(int64_t max_positions, int64_t d) {
  std::vector<T> table(static_cast<size_t>(max_positions * d));
  for (int64_t pos = 0; pos < max_positions; ++pos) {
    for (int64_t i = 0; i < d; i += 2) {
      double angle = static_cast<double>(pos) /
                     std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      table[static_cast<size_t>(pos * d + i)] = static_cast<T>(std::sin(angle));
      if (i + 1 < d) table[static_cast<size_t>(pos * d + i + 1)] = static_cast<T>(std::cos(angle));
    }
  }
  return table;
}

}  // namespace detail_model

template <class T>
ModelWeights<T> build_model(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ModelWeights<T> w;
  w.config = config;
  int64_t d = config.d_model;
  w.src_embedding = detail_model::glorot<T>({config.src_vocab_size, d}, rng);
  w.tgt_embedding = config.share_src_tgt_embedding
                        ? w.src_embedding
                        : detail_model::glorot<T>({config.tgt_vocab_size, d}, rng);
  w.positional = detail_model::sinusoidal_table<T>(config.max_positions, d);
  int n_enc = config.stacking.is_recurrent() ? 1 : config.stacking.encoder_layers;
  int n_dec = config.stacking.is_recurrent() ? 1 : config.stacking.decoder_layers;
  for (int i = 0; i < n_enc; ++i) {
    w.encoder_layers.push_back(detail_model::make_layer<T>(config, false, rng));
  }
  for (int i = 0; i < n_dec; ++i) {
    w.decoder_layers.push_back(detail_model::make_layer<T>(config, true, rng));
  }
  if (config.tie_output_projection) {
    w.output_projection = w.tgt_embedding;
  } else {
    w.output_projection = detail_model::glorot<T>({d, config.tgt_vocab_size}, rng);
  }
  return w;
}

// Deep copy preserving the aliasing structure (shared embedding, tied output).
template <class T>
ModelWeights<T> clone_weights(const ModelWeights<T>& w) {
  ModelWeights<T> out = build_model<T>(w.config, 0);
  auto src = w.named_parameters();
  auto dst = out.named_parameters();
  for (size_t i = 0; i < src.size(); ++i) dst[i].second->data = src[i].second->data;
  return out;
}

// Exact trainable-parameter count implied by the structural invariants;
// shared and tied tensors counted once.
int64_t count_parameters(const ModelConfig& config);

// ------------------------------------------------------------------ forward

struct ForwardOptions {
  int recurrences = -1;       // -1: the mode's own depth
  bool capture = false;       // record attention rows (batch must be 1)
  double dropout = 0.0;       // active only when rng != nullptr
  Rng* dropout_rng = nullptr;
};

template <class T>
struct EncodeResult {
  TensorPtr<T> hidden;  // [batch, src_len, d_model]
  std::optional<AttentionTrace> trace;
};

template <class T>
struct DecodeForwardResult {
  TensorPtr<T> logits;  // [batch, tgt_len, tgt_vocab]
  std::optional<AttentionTrace> trace;
};

namespace detail_model {

template <class T>
TensorPtr<T> apply_dropout(Tape<T>* tape, const TensorPtr<T>& x, const ForwardOptions& opt) {
  if (opt.dropout <= 0.0 || opt.dropout_rng == nullptr) return x;
  return ops::dropout(tape, x, opt.dropout, *opt.dropout_rng);
}

// One multi-head attention sublayer (no residual/norm). When `sink` is given
// the softmax rows of every head are copied out as doubles.
template <class T>
TensorPtr<T> multi_head_attention(Tape<T>* tape, const AttentionWeights<T>& aw,
                                  const TensorPtr<T>& queries, const TensorPtr<T>& keys_values,
                                  const std::vector<uint8_t>& key_mask, bool causal, int n_heads,
                                  AttentionTrace::Layer* sink) {
  int64_t batch = queries->dim(0);
  int64_t dh = queries->dim(2) / n_heads;
  auto q = ops::split_heads(tape, ops::linear(tape, queries, aw.wq), n_heads);
  auto k = ops::split_heads(tape, ops::linear(tape, keys_values, aw.wk), n_heads);
  auto v = ops::split_heads(tape, ops::linear(tape, keys_values, aw.wv), n_heads);
  auto scores = ops::scale(tape, ops::bmm(tape, q, k, /*trans_b=*/true),
                           static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
  auto probs = ops::attention_softmax(tape, scores, key_mask, batch, causal);
  if (sink != nullptr) {
    if (batch != 1) throw ConfigError("attention capture requires batch size 1");
    int64_t sq = probs->dim(1), sk = probs->dim(2);
    sink->heads.resize(static_cast<size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
      auto& rows = sink->heads[static_cast<size_t>(h)].rows;
      rows.assign(static_cast<size_t>(sq), std::vector<double>(static_cast<size_t>(sk)));
      for (int64_t qi = 0; qi < sq; ++qi)
        for (int64_t kj = 0; kj < sk; ++kj)
          rows[static_cast<size_t>(qi)][static_cast<size_t>(kj)] =
              static_cast<double>(probs->data[static_cast<size_t>((h * sq + qi) * sk + kj)]);
    }
  }
  auto ctx = ops::merge_heads(tape, ops::bmm(tape, probs, v), n_heads);
  return ops::linear(tape, ctx, aw.wo);
}

template <class T>
TensorPtr<T> feed_forward(Tape<T>* tape, const LayerWeights<T>& lw, const TensorPtr<T>& x) {
  auto h = ops::relu(tape, ops::add_bias(tape, ops::linear(tape, x, lw.ffn_w1), lw.ffn_b1));
  return ops::add_bias(tape, ops::linear(tape, h, lw.ffn_w2), lw.ffn_b2);
}

template <class T>
TensorPtr<T> residual_norm(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& sub,
                           const LayerNormWeights<T>& ln, const ForwardOptions& opt) {
  // post-norm: LayerNorm(x + Dropout(Sublayer(x)))
  auto dropped = apply_dropout(tape, sub, opt);
  return ops::layer_norm(tape, ops::add(tape, x, dropped), ln.gain, ln.bias, T(1e-6));
}

template <class T>
TensorPtr<T> encoder_layer_forward(Tape<T>* tape, const LayerWeights<T>& lw, TensorPtr<T> x,
                                   const std::vector<uint8_t>& src_mask, int n_heads,
                                   const ForwardOptions& opt, AttentionTrace::Layer* sink) {
  auto a = multi_head_attention(tape, lw.self_attn, x, x, src_mask, /*causal=*/false, n_heads, sink);
  x = residual_norm(tape, x, a, lw.ln_self, opt);
  auto f = feed_forward(tape, lw, x);
  return residual_norm(tape, x, f, lw.ln_ffn, opt);
}

template <class T>
TensorPtr<T> decoder_layer_forward(Tape<T>* tape, const LayerWeights<T>& lw, TensorPtr<T> x,
                                   const TensorPtr<T>& enc_out,
                                   const std::vector<uint8_t>& tgt_mask,
                                   const std::vector<uint8_t>& src_mask, int n_heads,
                                   const ForwardOptions& opt, AttentionTrace::Layer* cross_sink) {
  auto a = multi_head_attention(tape, lw.self_attn, x, x, tgt_mask, /*causal=*/true, n_heads,
                                static_cast<AttentionTrace::Layer*>(nullptr));
  x = residual_norm(tape, x, a, lw.ln_self, opt);
  auto c = multi_head_attention(tape, *lw.cross_attn, x, enc_out, src_mask, /*causal=*/false,
                                n_heads, cross_sink);
  x = residual_norm(tape, x, c, lw.ln_cross, opt);
  auto f = feed_forward(tape, lw, x);
  return residual_norm(tape, x, f, lw.ln_ffn, opt);
}

template <class T>
TensorPtr<T> embed(Tape<T>* tape, const ModelWeights<T>& w, const TensorPtr<T>& table,
                   const Batch& batch, const ForwardOptions& opt) {
  auto x = ops::embedding(tape, table, batch.ids, {batch.rows, batch.cols});
  x = ops::scale(tape, x, static_cast<T>(std::sqrt(static_cast<double>(w.config.d_model))));
  x = ops::add_rows_const(tape, x, w.positional, w.config.max_positions);
  return apply_dropout(tape, x, opt);
}

// Resolves the per-side depth and which stored layer each application uses.
inline int resolve_depth(const StackingMode& mode, int side_layers, int requested,
                         const char* side) {
  if (mode.is_recurrent()) {
    int k = requested < 0 ? mode.recurrences : requested;
    if (k < 1) throw ConfigError(std::string(side) + ": recurrences must be >= 1");
    return k;
  }
  if (requested >= 0 && requested != side_layers) {
    throw ConfigError(std::string(side) + ": recurrence override " + std::to_string(requested) +
                      " differs from the " + std::to_string(side_layers) +
                      " layers of a Vanilla model");
  }
  return side_layers;
}

}  // namespace detail_model

template <class T>
EncodeResult<T> encode(Tape<T>* tape, const ModelWeights<T>& w, const Batch& src,
                       const ForwardOptions& opt = {}) {
  const auto& cfg = w.config;
  int depth = detail_model::resolve_depth(cfg.stacking,
                                          static_cast<int>(w.encoder_layers.size()),
                                          opt.recurrences, "encode");
  EncodeResult<T> result;
  if (opt.capture) result.trace.emplace();
  auto x = detail_model::embed(tape, w, w.src_embedding, src, opt);
  for (int i = 0; i < depth; ++i) {
    const auto& lw = cfg.stacking.is_recurrent() ? w.encoder_layers[0]
                                                 : w.encoder_layers[static_cast<size_t>(i)];
    AttentionTrace::Layer* sink = nullptr;
    if (result.trace) {
      result.trace->layers.emplace_back();
      sink = &result.trace->layers.back();
    }
    x = detail_model::encoder_layer_forward(tape, lw, x, src.mask, cfg.n_heads, opt, sink);
  }
  result.hidden = x;
  return result;
}

template <class T>
DecodeForwardResult<T> decode_forward(Tape<T>* tape, const ModelWeights<T>& w,
                                      const TensorPtr<T>& encoder_out, const Batch& src,
                                      const Batch& tgt_prefix, const ForwardOptions& opt = {}) {
  const auto& cfg = w.config;
  int depth = detail_model::resolve_depth(cfg.stacking,
                                          static_cast<int>(w.decoder_layers.size()),
                                          opt.recurrences, "decode");
  DecodeForwardResult<T> result;
  if (opt.capture) result.trace.emplace();
  auto x = detail_model::embed(tape, w, w.tgt_embedding, tgt_prefix, opt);
  for (int i = 0; i < depth; ++i) {
    const auto& lw = cfg.stacking.is_recurrent() ? w.decoder_layers[0]
                                                 : w.decoder_layers[static_cast<size_t>(i)];
    AttentionTrace::Layer* sink = nullptr;
    if (result.trace) {
      result.trace->layers.emplace_back();
      sink = &result.trace->layers.back();
    }
    x = detail_model::decoder_layer_forward(tape, lw, x, encoder_out, tgt_prefix.mask, src.mask,
                                            cfg.n_heads, opt, sink);
  }
  result.logits = cfg.tie_output_projection ? ops::linear_nt(tape, x, w.output_projection)
                                            : ops::linear(tape, x, w.output_projection);
  return result;
}

}  // namespace rsnmt
