#include "rsnmt/decoding.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "rsnmt/eval.hpp"

namespace rsnmt {

double length_penalty(int64_t length, double alpha) {
  if (length < 1) throw ConfigError("length_penalty: length must be >= 1");
  return std::pow((5.0 + static_cast<double>(length)) / 6.0, alpha);
}

namespace {

struct LiveBeam {
  std::vector<int32_t> tokens;
  double logprob = 0.0;
};

Batch single_row_batch(const std::vector<int32_t>& ids) {
  return make_batch({ids});
}

Batch repeat_batch_row(const Batch& b, int64_t n) {
  Batch out;
  out.rows = n;
  out.cols = b.cols;
  out.ids.reserve(static_cast<size_t>(n * b.cols));
  out.mask.reserve(static_cast<size_t>(n * b.cols));
  for (int64_t i = 0; i < n; ++i) {
    out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
    out.mask.insert(out.mask.end(), b.mask.begin(), b.mask.end());
    out.lengths.push_back(b.lengths[0]);
  }
  return out;
}

TensorPtr<float> repeat_hidden(const TensorPtr<float>& h, int64_t n) {
  auto out = zeros<float>({n, h->dim(1), h->dim(2)});
  for (int64_t i = 0; i < n; ++i) {
    std::copy(h->data.begin(), h->data.end(), out->data.begin() + i * h->numel());
  }
  return out;
}

// Log-probabilities (double) of the last position of row `row`, with pad and
// bos ruled out so hypotheses never contain them.
std::vector<double> last_position_log_probs(const TensorPtr<float>& logits, int64_t row) {
  int64_t len = logits->dim(1), vocab = logits->dim(2);
  const float* x = logits->data.data() + ((row * len) + (len - 1)) * vocab;
  std::vector<double> lp(static_cast<size_t>(vocab));
  double mx = -std::numeric_limits<double>::infinity();
  for (int64_t v = 0; v < vocab; ++v) mx = std::max(mx, static_cast<double>(x[v]));
  double z = 0.0;
  for (int64_t v = 0; v < vocab; ++v) z += std::exp(static_cast<double>(x[v]) - mx);
  double lse = mx + std::log(z);
  for (int64_t v = 0; v < vocab; ++v) lp[static_cast<size_t>(v)] = static_cast<double>(x[v]) - lse;
  lp[kPadId] = -std::numeric_limits<double>::infinity();
  lp[kBosId] = -std::numeric_limits<double>::infinity();
  return lp;
}

int source_content_length(const std::vector<int32_t>& src_ids) {
  int n = 0;
  for (int32_t id : src_ids)
    if (!is_reserved_id(id)) ++n;
  return n;
}

void check_overrides(const ModelWeights<float>& w, const DecodeConfig& cfg) {
  cfg.validate();
  if (!w.config.stacking.is_recurrent() && (cfg.enc_recurrences || cfg.dec_recurrences)) {
    throw ConfigError("decode: recurrence overrides are only valid for Recurrent-mode models");
  }
}

Hypothesis finish(std::vector<int32_t> tokens, double logprob, int64_t length, bool eos,
                  double alpha) {
  Hypothesis h;
  h.tokens = std::move(tokens);
  h.logprob = logprob;
  h.length = length;
  h.ended_with_eos = eos;
  h.score = logprob / length_penalty(length, alpha);
  return h;
}

bool lex_less(const std::vector<int32_t>& a, const std::vector<int32_t>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

// Higher score first; equal score -> lexicographically lower token sequence.
bool better_hypothesis(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return lex_less(a.tokens, b.tokens);
}

std::optional<AttentionTrace> capture_trace(const ModelWeights<float>& w, const Batch& src,
                                            const TensorPtr<float>& enc_hidden,
                                            const std::vector<int32_t>& tokens,
                                            const DecodeConfig& cfg) {
  std::vector<int32_t> dec_input;
  dec_input.push_back(kBosId);
  dec_input.insert(dec_input.end(), tokens.begin(), tokens.end());
  ForwardOptions opt;
  opt.capture = true;
  if (cfg.dec_recurrences) opt.recurrences = *cfg.dec_recurrences;
  auto out = decode_forward<float>(nullptr, w, enc_hidden, src, single_row_batch(dec_input), opt);
  return out.trace;
}

}  // namespace

SentenceResult greedy_decode_sentence(const ModelWeights<float>& w,
                                      const std::vector<int32_t>& src_ids,
                                      const DecodeConfig& cfg) {
  check_overrides(w, cfg);
  Batch src = single_row_batch(src_ids);
  ForwardOptions enc_opt;
  if (cfg.enc_recurrences) enc_opt.recurrences = *cfg.enc_recurrences;
  auto enc = encode<float>(nullptr, w, src, enc_opt);

  int64_t max_len = cfg.max_len_a + cfg.max_len_b * source_content_length(src_ids);
  max_len = std::max<int64_t>(max_len, 1);

  std::vector<int32_t> tokens;
  double logprob = 0.0;
  bool saw_eos = false;
  ForwardOptions dec_opt;
  if (cfg.dec_recurrences) dec_opt.recurrences = *cfg.dec_recurrences;
  while (static_cast<int64_t>(tokens.size()) < max_len) {
    std::vector<int32_t> dec_input;
    dec_input.push_back(kBosId);
    dec_input.insert(dec_input.end(), tokens.begin(), tokens.end());
    auto out = decode_forward<float>(nullptr, w, enc.hidden, src, single_row_batch(dec_input),
                                     dec_opt);
    auto lp = last_position_log_probs(out.logits, 0);
    int32_t best = 0;
    for (int32_t v = 1; v < static_cast<int32_t>(lp.size()); ++v) {
      if (lp[static_cast<size_t>(v)] > lp[static_cast<size_t>(best)]) best = v;
    }
    logprob += lp[static_cast<size_t>(best)];
    if (best == kEosId) {
      saw_eos = true;
      break;
    }
    tokens.push_back(best);
  }

  SentenceResult res;
  int64_t length = static_cast<int64_t>(tokens.size()) + (saw_eos ? 1 : 0);
  res.best = finish(tokens, logprob, std::max<int64_t>(length, 1), saw_eos, cfg.alpha);
  res.finished_pool.push_back(res.best);
  if (cfg.capture_attention) res.trace = capture_trace(w, src, enc.hidden, res.best.tokens, cfg);
  return res;
}

SentenceResult beam_decode_sentence(const ModelWeights<float>& w,
                                    const std::vector<int32_t>& src_ids,
                                    const DecodeConfig& cfg) {
  check_overrides(w, cfg);
  Batch src = single_row_batch(src_ids);
  ForwardOptions enc_opt;
  if (cfg.enc_recurrences) enc_opt.recurrences = *cfg.enc_recurrences;
  auto enc = encode<float>(nullptr, w, src, enc_opt);

  int64_t max_len = cfg.max_len_a + cfg.max_len_b * source_content_length(src_ids);
  max_len = std::max<int64_t>(max_len, 1);
  double lp_max = length_penalty(max_len, cfg.alpha);

  std::vector<LiveBeam> live{{{}, 0.0}};
  std::vector<Hypothesis> finished;
  ForwardOptions dec_opt;
  if (cfg.dec_recurrences) dec_opt.recurrences = *cfg.dec_recurrences;

  while (!live.empty()) {
    int64_t cur_len = static_cast<int64_t>(live.front().tokens.size());
    std::vector<std::vector<int32_t>> prefixes;
    prefixes.reserve(live.size());
    for (const auto& l : live) {
      std::vector<int32_t> p;
      p.push_back(kBosId);
      p.insert(p.end(), l.tokens.begin(), l.tokens.end());
      prefixes.push_back(std::move(p));
    }
    Batch dec_batch = make_batch(prefixes);
    Batch src_rep = live.size() == 1 ? src : repeat_batch_row(src, static_cast<int64_t>(live.size()));
    TensorPtr<float> hidden = live.size() == 1
                                  ? enc.hidden
                                  : repeat_hidden(enc.hidden, static_cast<int64_t>(live.size()));
    auto out = decode_forward<float>(nullptr, w, hidden, src_rep, dec_batch, dec_opt);

    struct Candidate {
      size_t parent;
      int32_t token;
      double logprob;
    };
    std::vector<Candidate> cands;
    cands.reserve(live.size() * static_cast<size_t>(out.logits->dim(2)));
    for (size_t i = 0; i < live.size(); ++i) {
      auto lp = last_position_log_probs(out.logits, static_cast<int64_t>(i));
      for (int32_t v = 0; v < static_cast<int32_t>(lp.size()); ++v) {
        double l = lp[static_cast<size_t>(v)];
        if (l == -std::numeric_limits<double>::infinity()) continue;
        cands.push_back({i, v, live[i].logprob + l});
      }
    }
    std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      const auto& ta = live[a.parent].tokens;
      const auto& tb = live[b.parent].tokens;
      if (ta != tb) return lex_less(ta, tb);
      return a.token < b.token;
    });

    std::vector<LiveBeam> next_live;
    size_t budget = static_cast<size_t>(cfg.beam_size);
    for (size_t c = 0; c < cands.size() && c < budget; ++c) {
      const auto& cand = cands[c];
      if (cand.token == kEosId) {
        finished.push_back(
            finish(live[cand.parent].tokens, cand.logprob, cur_len + 1, true, cfg.alpha));
      } else {
        LiveBeam nb;
        nb.tokens = live[cand.parent].tokens;
        nb.tokens.push_back(cand.token);
        nb.logprob = cand.logprob;
        next_live.push_back(std::move(nb));
      }
    }
    live = std::move(next_live);

    if (static_cast<int64_t>(cur_len) + 1 >= max_len) {
      for (auto& l : live) {
        finished.push_back(finish(std::move(l.tokens), l.logprob, max_len, false, cfg.alpha));
      }
      live.clear();
      break;
    }
    if (!finished.empty() && !live.empty()) {
      double best_score = -std::numeric_limits<double>::infinity();
      for (const auto& f : finished) best_score = std::max(best_score, f.score);
      std::vector<LiveBeam> kept;
      for (auto& l : live) {
        double bound = l.logprob / lp_max;  // log-probs are <= 0
        if (bound > best_score) kept.push_back(std::move(l));
      }
      live = std::move(kept);
    }
  }

  if (finished.empty()) {
    // Degenerate: max_len permitted no real token. Report an empty eos-only
    // hypothesis so the contract (ends with eos or max length) still holds.
    finished.push_back(finish({}, 0.0, 1, false, cfg.alpha));
  }
  SentenceResult res;
  res.best = *std::min_element(finished.begin(), finished.end(),
                               [](const Hypothesis& a, const Hypothesis& b) {
                                 return better_hypothesis(a, b);
                               });
  res.finished_pool = std::move(finished);
  if (cfg.capture_attention) res.trace = capture_trace(w, src, enc.hidden, res.best.tokens, cfg);
  return res;
}

CorpusDecodeResult decode_corpus(const ModelWeights<float>& w,
                                 const std::vector<std::vector<int32_t>>& src_id_seqs,
                                 const DecodeConfig& cfg, bool greedy) {
  auto start = std::chrono::steady_clock::now();
  CorpusDecodeResult out;
  out.hyps.reserve(src_id_seqs.size());
  for (const auto& src : src_id_seqs) {
    auto res = greedy ? greedy_decode_sentence(w, src, cfg) : beam_decode_sentence(w, src, cfg);
    out.hyps.push_back(std::move(res.best));
    out.traces.push_back(std::move(res.trace));
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<SweepRow> recurrence_sweep(const ModelWeights<float>& w, const Vocabulary& src_vocab,
                                       const Vocabulary& tgt_vocab,
                                       const std::vector<std::string>& src_lines,
                                       const std::vector<std::string>& ref_lines,
                                       const std::vector<int>& dec_recurrence_values,
                                       const DecodeConfig& cfg, bool greedy) {
  if (!w.config.stacking.is_recurrent()) {
    throw ConfigError("recurrence sweep: model is not in Recurrent mode");
  }
  if (src_lines.size() != ref_lines.size()) {
    throw DataError("recurrence sweep: source and reference line counts differ");
  }
  std::vector<std::vector<int32_t>> src_ids;
  src_ids.reserve(src_lines.size());
  for (const auto& s : src_lines) src_ids.push_back(src_vocab.encode(s));

  std::vector<SweepRow> rows;
  for (int k : dec_recurrence_values) {
    DecodeConfig c = cfg;
    c.dec_recurrences = k;
    auto start = std::chrono::steady_clock::now();
    auto decoded = decode_corpus(w, src_ids, c, greedy);
    double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::vector<std::string> hyp_lines;
    hyp_lines.reserve(decoded.hyps.size());
    for (const auto& h : decoded.hyps) hyp_lines.push_back(tgt_vocab.decode(h.tokens));
    auto report = corpus_bleu_lines(hyp_lines, ref_lines);
    rows.push_back({k, report.bleu, secs});
  }
  return rows;
}

}  // namespace rsnmt
