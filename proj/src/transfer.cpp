#include "rsnmt/transfer.hpp"

#include <filesystem>

#include "rsnmt/eval.hpp"

namespace rsnmt {

namespace {

void copy_tensor(const TensorPtr<float>& dst, const TensorPtr<float>& src) {
  dst->data = src->data;
}

// Copy every tensor of one layer; shapes are already width-checked.
void copy_layer(LayerWeights<float>& dst, const LayerWeights<float>& src) {
  copy_tensor(dst.self_attn.wq, src.self_attn.wq);
  copy_tensor(dst.self_attn.wk, src.self_attn.wk);
  copy_tensor(dst.self_attn.wv, src.self_attn.wv);
  copy_tensor(dst.self_attn.wo, src.self_attn.wo);
  if (dst.cross_attn && src.cross_attn) {
    copy_tensor(dst.cross_attn->wq, src.cross_attn->wq);
    copy_tensor(dst.cross_attn->wk, src.cross_attn->wk);
    copy_tensor(dst.cross_attn->wv, src.cross_attn->wv);
    copy_tensor(dst.cross_attn->wo, src.cross_attn->wo);
  }
  copy_tensor(dst.ffn_w1, src.ffn_w1);
  copy_tensor(dst.ffn_b1, src.ffn_b1);
  copy_tensor(dst.ffn_w2, src.ffn_w2);
  copy_tensor(dst.ffn_b2, src.ffn_b2);
  copy_tensor(dst.ln_self.gain, src.ln_self.gain);
  copy_tensor(dst.ln_self.bias, src.ln_self.bias);
  if (dst.cross_attn && src.cross_attn) {
    copy_tensor(dst.ln_cross.gain, src.ln_cross.gain);
    copy_tensor(dst.ln_cross.bias, src.ln_cross.bias);
  }
  copy_tensor(dst.ln_ffn.gain, src.ln_ffn.gain);
  copy_tensor(dst.ln_ffn.bias, src.ln_ffn.bias);
}

}  // namespace

TransferResult init_from_teacher(const ModelConfig& student_config, const TransferConfig& t,
                                 uint64_t seed) {
  student_config.validate();
  if (!student_config.stacking.is_recurrent()) {
    throw ConfigError("layer transfer: student must be a Recurrent-mode model");
  }
  auto teacher_ckpt = load_checkpoint(t.teacher_checkpoint);
  const ModelConfig& tc = teacher_ckpt.config;
  if (tc.stacking.is_recurrent()) {
    throw ConfigError("layer transfer: teacher must be a Vanilla-mode model");
  }
  if (tc.d_model != student_config.d_model || tc.d_ff != student_config.d_ff ||
      tc.n_heads != student_config.n_heads) {
    throw ConfigError("layer transfer: teacher widths (" + std::to_string(tc.d_model) + ", " +
                      std::to_string(tc.d_ff) + ", " + std::to_string(tc.n_heads) +
                      " heads) do not match the student");
  }
  if (tc.src_vocab_size != student_config.src_vocab_size ||
      tc.tgt_vocab_size != student_config.tgt_vocab_size) {
    throw ConfigError("layer transfer: teacher vocabularies do not match the student");
  }
  if (t.l_enc < 1 || t.l_enc > tc.stacking.encoder_layers) {
    throw ConfigError("layer transfer: l_enc " + std::to_string(t.l_enc) +
                      " out of range 1.." + std::to_string(tc.stacking.encoder_layers));
  }
  if (t.l_dec < 1 || t.l_dec > tc.stacking.decoder_layers) {
    throw ConfigError("layer transfer: l_dec " + std::to_string(t.l_dec) +
                      " out of range 1.." + std::to_string(tc.stacking.decoder_layers));
  }

  auto teacher = teacher_ckpt.to_weights();
  TransferResult out{build_model<float>(student_config, seed), OrderedJson::object()};
  copy_layer(out.weights.encoder_layers[0],
             teacher.encoder_layers[static_cast<size_t>(t.l_enc - 1)]);
  copy_layer(out.weights.decoder_layers[0],
             teacher.decoder_layers[static_cast<size_t>(t.l_dec - 1)]);
  if (t.copy_embeddings) {
    copy_tensor(out.weights.src_embedding, teacher.src_embedding);
    if (out.weights.tgt_embedding != out.weights.src_embedding) {
      // student keeps separate tables; take the teacher's target side
      copy_tensor(out.weights.tgt_embedding, teacher.tgt_embedding);
    }
  }
  if (t.copy_output_projection && out.weights.output_projection != out.weights.tgt_embedding &&
      teacher.output_projection != teacher.tgt_embedding &&
      out.weights.output_projection->shape == teacher.output_projection->shape) {
    copy_tensor(out.weights.output_projection, teacher.output_projection);
  }

  out.provenance["teacher"] = t.teacher_checkpoint;
  out.provenance["l_enc"] = t.l_enc;
  out.provenance["l_dec"] = t.l_dec;
  out.provenance["copy_embeddings"] = t.copy_embeddings;
  out.provenance["copy_output_projection"] = t.copy_output_projection;
  return out;
}

OrderedJson DistillReport::to_json(const std::string& teacher_dir) const {
  OrderedJson j;
  j["teacher"] = teacher_dir;
  j["requested"] = requested;
  j["produced"] = produced;
  j["skipped"] = skipped;
  j["sample_size"] = sample_size;
  j["seed"] = seed;
  if (sample_bleu >= 0.0) j["sample_bleu"] = sample_bleu;
  return j;
}

namespace {

// Translate every source line with the teacher; failures are recorded by
// index and skipped, never silently dropped.
std::vector<std::optional<std::string>> translate_all(const LoadedModel& model,
                                                      const std::vector<std::string>& lines,
                                                      const DecodeConfig& decode,
                                                      std::vector<int64_t>& skipped) {
  std::vector<std::optional<std::string>> out(lines.size());
  for (size_t i = 0; i < lines.size(); ++i) {
    try {
      auto ids = model.src_vocab.encode(lines[i]);
      auto res = beam_decode_sentence(model.weights, ids, decode);
      out[i] = model.tgt_vocab.decode(res.best.tokens);
    } catch (const std::exception&) {
      skipped.push_back(static_cast<int64_t>(i));
    }
  }
  return out;
}

}  // namespace

ParallelCorpus distill_corpus(const LoadedModel& teacher, const std::vector<std::string>& sources,
                              const DistillConfig& cfg, const std::vector<std::string>* references,
                              DistillReport* report) {
  if (references && references->size() != sources.size()) {
    throw DataError("distill: reference count does not match source count");
  }
  DistillReport rep;
  rep.requested = static_cast<int64_t>(sources.size());
  rep.seed = cfg.seed;

  std::vector<int64_t> skipped;
  auto translations = translate_all(teacher, sources, cfg.decode, skipped);

  ParallelCorpus out;
  std::vector<std::string> kept_refs;
  for (size_t i = 0; i < sources.size(); ++i) {
    if (!translations[i]) continue;
    out.push(sources[i], *translations[i]);
    if (references) kept_refs.push_back((*references)[i]);
  }
  rep.produced = static_cast<int64_t>(out.size());
  rep.skipped = std::move(skipped);

  if (references && !out.tgt.empty()) {
    size_t n = out.tgt.size();
    size_t sample = std::min<size_t>(static_cast<size_t>(cfg.sample_size), n);
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(cfg.seed);
    rng.shuffle(idx);
    idx.resize(sample);
    std::vector<std::string> sampled_hyp, sampled_ref;
    for (size_t i : idx) {
      sampled_hyp.push_back(out.tgt[i]);
      sampled_ref.push_back(kept_refs[i]);
    }
    rep.sample_bleu = corpus_bleu_lines(sampled_hyp, sampled_ref).bleu;
    rep.sample_size = static_cast<int64_t>(sample);
  }
  if (report) *report = std::move(rep);
  return out;
}

ParallelCorpus back_translate(const LoadedModel& reverse_model,
                              const std::vector<std::string>& mono_target_side,
                              const DistillConfig& cfg, const ParallelCorpus* original,
                              DistillReport* report) {
  DistillReport rep;
  rep.requested = static_cast<int64_t>(mono_target_side.size());
  rep.seed = cfg.seed;

  std::vector<int64_t> skipped;
  auto translations = translate_all(reverse_model, mono_target_side, cfg.decode, skipped);

  ParallelCorpus out;
  if (cfg.mix_original && original != nullptr) {
    for (size_t i = 0; i < original->size(); ++i) out.push(original->src[i], original->tgt[i]);
  }
  for (size_t i = 0; i < mono_target_side.size(); ++i) {
    if (!translations[i]) continue;
    out.push(*translations[i], mono_target_side[i]);
  }
  rep.produced = static_cast<int64_t>(out.size());
  rep.skipped = std::move(skipped);
  if (report) *report = std::move(rep);
  return out;
}

}  // namespace rsnmt
