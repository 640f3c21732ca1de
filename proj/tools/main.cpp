#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <regex>
#include <string>

#include <CLI11.hpp>

#include "rsnmt/eval.hpp"
#include "rsnmt/pipeline.hpp"
#include "rsnmt/toygen.hpp"

namespace fs = std::filesystem;
using namespace rsnmt;

namespace {

uint64_t env_seed() {
  const char* s = std::getenv("RSNMT_SEED");
  if (s == nullptr) return 1;
  return static_cast<uint64_t>(std::strtoull(s, nullptr, 10));
}

void echo_config(const std::string& out_dir, OrderedJson resolved) {
  fs::create_directories(out_dir);
  write_json_file((fs::path(out_dir) / "resolved_config.json").string(), std::move(resolved));
}

OrderedJson decode_config_to_json(const DecodeConfig& c, bool greedy) {
  OrderedJson j;
  j["beam_size"] = c.beam_size;
  j["alpha"] = c.alpha;
  j["max_len_a"] = c.max_len_a;
  j["max_len_b"] = c.max_len_b;
  if (c.enc_recurrences) j["enc_recurrences"] = *c.enc_recurrences;
  if (c.dec_recurrences) j["dec_recurrences"] = *c.dec_recurrences;
  j["capture_attention"] = c.capture_attention;
  j["timing"] = c.timing;
  j["greedy"] = greedy;
  return j;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string src, tgt, out, config_file;
  std::string stacking = "";
  int recurrences = -1, enc_layers = -1, dec_layers = -1;
  int d_model = -1, d_ff = -1, heads = -1, max_positions = -1;
  double dropout = -1.0, label_smoothing = -1.0, base_lr = -1.0, train_fraction = 1.0;
  int64_t steps = -1, warmup = -1, checkpoint_every = -1;
  int keep_last = -1;
  int64_t batch_tokens = -1;
  int64_t vocab_max = -1;
  bool share_embeddings = false, tie_output = false;
  std::string init_from_teacher;
  int l_enc = 1, l_dec = 1;
  uint64_t seed = env_seed();
};

int run_train(const TrainArgs& a) {
  TrainJob job;
  job.model.stacking = StackingMode::recurrent(1);
  if (!a.config_file.empty()) {
    auto j = read_json_file(a.config_file);
    if (j.contains("model")) job.model = model_config_from_json(j["model"]);
    if (j.contains("train")) job.train = train_config_from_json(j["train"]);
    if (j.contains("batch_tokens")) job.batch_tokens = j["batch_tokens"].get<int64_t>();
    if (j.contains("vocab_max")) job.vocab_max = j["vocab_max"].get<size_t>();
  }
  // flags override the file
  if (a.stacking == "recurrent") {
    job.model.stacking = StackingMode::recurrent(a.recurrences > 0 ? a.recurrences : 1);
  } else if (a.stacking == "vanilla") {
    job.model.stacking = StackingMode::vanilla(a.enc_layers > 0 ? a.enc_layers : 1,
                                               a.dec_layers > 0 ? a.dec_layers : 1);
  } else if (a.recurrences > 0 && job.model.stacking.is_recurrent()) {
    job.model.stacking = StackingMode::recurrent(a.recurrences);
  }
  if (a.d_model > 0) job.model.d_model = a.d_model;
  if (a.d_ff > 0) job.model.d_ff = a.d_ff;
  if (a.heads > 0) job.model.n_heads = a.heads;
  if (a.max_positions > 0) job.model.max_positions = a.max_positions;
  if (a.dropout >= 0.0) job.model.dropout = a.dropout;
  if (a.share_embeddings) job.model.share_src_tgt_embedding = true;
  if (a.tie_output) job.model.tie_output_projection = true;
  if (a.steps > 0) job.train.total_steps = a.steps;
  if (a.warmup > 0) job.train.warmup_steps = a.warmup;
  if (a.base_lr >= 0.0) job.train.base_lr = a.base_lr;
  if (a.label_smoothing >= 0.0) job.train.label_smoothing = a.label_smoothing;
  if (a.checkpoint_every >= 0) job.train.checkpoint_every = a.checkpoint_every;
  if (a.keep_last > 0) job.train.keep_last = a.keep_last;
  if (a.batch_tokens > 0) job.batch_tokens = a.batch_tokens;
  if (a.vocab_max > 0) job.vocab_max = static_cast<size_t>(a.vocab_max);
  job.train.seed = a.seed;
  job.train_fraction = a.train_fraction;
  job.out_dir = a.out;
  if (!a.init_from_teacher.empty()) {
    job.init = TeacherInit{a.init_from_teacher, a.l_enc, a.l_dec, true, true};
  }

  auto outcome = run_training_files(job, a.src, a.tgt);

  OrderedJson resolved;
  resolved["command"] = "train";
  resolved["src"] = a.src;
  resolved["tgt"] = a.tgt;
  resolved["model"] = model_config_to_json(outcome.resolved_config);
  resolved["train"] = train_config_to_json(job.train);
  resolved["batch_tokens"] = job.batch_tokens;
  resolved["vocab_max"] = job.vocab_max;
  resolved["train_fraction"] = job.train_fraction;
  if (job.init) {
    OrderedJson init;
    init["teacher_dir"] = job.init->teacher_dir;
    init["l_enc"] = job.init->l_enc;
    init["l_dec"] = job.init->l_dec;
    resolved["init_from_teacher"] = init;
  }
  echo_config(a.out, resolved);

  std::printf("trained %lld steps; final loss %.4f; checkpoint %s\n",
              static_cast<long long>(job.train.total_steps),
              outcome.losses.empty() ? 0.0f : outcome.losses.back(),
              outcome.checkpoint_path.c_str());
  return 0;
}

// --------------------------------------------------------------- translate

struct TranslateArgs {
  std::string model, input, out;
  int beam = 4;
  double alpha = 0.6;
  bool greedy = false;
  int enc_recurrence = -1, dec_recurrence = -1;
  int max_len_a = 10, max_len_b = 2;
  bool time = false;
  int attention_out = 0;
};

int run_translate(const TranslateArgs& a) {
  auto start = std::chrono::steady_clock::now();

  auto model = load_model_dir(a.model);
  auto input = read_lines(a.input);
  DecodeConfig dc;
  dc.beam_size = a.beam;
  dc.alpha = a.alpha;
  dc.max_len_a = a.max_len_a;
  dc.max_len_b = a.max_len_b;
  if (a.enc_recurrence > 0) dc.enc_recurrences = a.enc_recurrence;
  if (a.dec_recurrence > 0) dc.dec_recurrences = a.dec_recurrence;
  dc.timing = a.time;

  fs::create_directories(a.out);
  std::vector<std::string> lines;
  lines.reserve(input.size());
  int traced = 0;
  for (size_t i = 0; i < input.size(); ++i) {
    DecodeConfig per = dc;
    per.capture_attention = static_cast<int>(i) < a.attention_out;
    auto ids = model.src_vocab.encode(input[i]);
    auto res = a.greedy ? greedy_decode_sentence(model.weights, ids, per)
                        : beam_decode_sentence(model.weights, ids, per);
    lines.push_back(model.tgt_vocab.decode(res.best.tokens));
    if (res.trace) {
      res.trace->sentence = input[i];
      for (int32_t id : ids) res.trace->src_tokens.push_back(model.src_vocab.token(id));
      auto stats = compute_attention_stats(*res.trace);
      export_attention(*res.trace, stats, a.out, "attn_" + std::to_string(i));
      ++traced;
    }
  }
  write_lines((fs::path(a.out) / "translations.txt").string(), lines);

  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  OrderedJson resolved;
  resolved["command"] = "translate";
  resolved["model"] = a.model;
  resolved["input"] = a.input;
  resolved["decode"] = decode_config_to_json(dc, a.greedy);
  resolved["attention_out"] = a.attention_out;
  echo_config(a.out, resolved);

  if (a.time) {
    // wall time includes model loading and output writing
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%zu sentences\t%.3f s (including model load and write)",
                  input.size(), wall);
    write_lines((fs::path(a.out) / "timing.txt").string(), {buf});
    std::printf("%s\n", buf);
  }
  std::printf("wrote %zu translations to %s\n", lines.size(),
              (fs::path(a.out) / "translations.txt").string().c_str());
  if (traced > 0) std::printf("exported %d attention traces\n", traced);
  return 0;
}

// ----------------------------------------------------------------- distill

struct DistillArgs {
  std::string model, src, ref, out;
  int beam = 4;
  double alpha = 0.6;
  int sample = 1000;
  uint64_t seed = env_seed();
};

int run_distill(const DistillArgs& a) {
  auto teacher = load_model_dir(a.model);
  auto sources = read_lines(a.src);
  std::vector<std::string> refs;
  if (!a.ref.empty()) refs = read_lines(a.ref);

  DistillConfig cfg;
  cfg.decode.beam_size = a.beam;
  cfg.decode.alpha = a.alpha;
  cfg.sample_size = a.sample;
  cfg.seed = a.seed;

  DistillReport report;
  auto pseudo = distill_corpus(teacher, sources, cfg, refs.empty() ? nullptr : &refs, &report);

  fs::create_directories(a.out);
  write_lines((fs::path(a.out) / "train.src").string(), pseudo.src);
  write_lines((fs::path(a.out) / "train.tgt").string(), pseudo.tgt);
  write_json_file((fs::path(a.out) / "report.json").string(), report.to_json(a.model));

  OrderedJson resolved;
  resolved["command"] = "distill";
  resolved["model"] = a.model;
  resolved["src"] = a.src;
  if (!a.ref.empty()) resolved["ref"] = a.ref;
  resolved["decode"] = decode_config_to_json(cfg.decode, false);
  resolved["sample"] = a.sample;
  resolved["seed"] = a.seed;
  echo_config(a.out, resolved);

  std::printf("distilled %lld/%lld sentences (%zu skipped)",
              static_cast<long long>(report.produced), static_cast<long long>(report.requested),
              report.skipped.size());
  if (report.sample_bleu >= 0.0) {
    std::printf("; sample BLEU vs references = %.2f (n=%lld)", report.sample_bleu,
                static_cast<long long>(report.sample_size));
  }
  std::printf("\n");
  return 0;
}

// ----------------------------------------------------------------- augment

struct AugmentArgs {
  std::string model, mono, out, orig_src, orig_tgt;
  bool mix = false;
  int beam = 4;
  double alpha = 0.6;
  uint64_t seed = env_seed();
};

int run_augment(const AugmentArgs& a) {
  auto reverse_model = load_model_dir(a.model);
  auto mono = read_lines(a.mono);

  DistillConfig cfg;
  cfg.decode.beam_size = a.beam;
  cfg.decode.alpha = a.alpha;
  cfg.mix_original = a.mix;
  cfg.seed = a.seed;

  ParallelCorpus original;
  if (a.mix) {
    if (a.orig_src.empty() || a.orig_tgt.empty()) {
      throw ConfigError("augment: --mix needs --orig-src and --orig-tgt");
    }
    original = load_parallel(a.orig_src, a.orig_tgt);
  }

  DistillReport report;
  auto mixed = back_translate(reverse_model, mono, cfg, a.mix ? &original : nullptr, &report);

  fs::create_directories(a.out);
  write_lines((fs::path(a.out) / "train.src").string(), mixed.src);
  write_lines((fs::path(a.out) / "train.tgt").string(), mixed.tgt);
  write_json_file((fs::path(a.out) / "report.json").string(), report.to_json(a.model));

  OrderedJson resolved;
  resolved["command"] = "augment";
  resolved["model"] = a.model;
  resolved["mono"] = a.mono;
  resolved["mix"] = a.mix;
  resolved["decode"] = decode_config_to_json(cfg.decode, false);
  resolved["seed"] = a.seed;
  echo_config(a.out, resolved);

  std::printf("wrote %zu pairs (%zu back-translated, %zu original, %zu skipped)\n", mixed.size(),
              mixed.size() - original.size(), original.size(), report.skipped.size());
  return 0;
}

// ----------------------------------------------------------------- average

int run_average(const std::string& dir, int last, std::string out) {
  std::map<int64_t, std::string> by_step;
  std::regex pat("ckpt-([0-9]+)\\.rsnmt");
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pat)) by_step[std::stoll(m[1])] = entry.path().string();
  }
  if (by_step.empty()) throw ConfigError("average: no ckpt-<step>.rsnmt files in " + dir);
  std::vector<std::string> paths;
  for (auto it = by_step.rbegin(); it != by_step.rend() && static_cast<int>(paths.size()) < last;
       ++it) {
    paths.push_back(it->second);
  }
  auto avg = average_checkpoints(paths);
  if (out.empty()) out = (fs::path(dir) / "averaged.rsnmt").string();
  save_checkpoint(out, avg);
  std::printf("averaged %zu checkpoints (steps up to %lld) into %s\n", paths.size(),
              static_cast<long long>(avg.step), out.c_str());
  return 0;
}

// ------------------------------------------------------------ bleu / stats

int run_bleu(const std::string& hyp, const std::string& ref, bool lowercase) {
  auto report = corpus_bleu_lines(read_lines(hyp), read_lines(ref), 4, lowercase);
  std::printf("BLEU = %.2f\n", report.bleu);
  std::printf("precisions: %.4f / %.4f / %.4f / %.4f\n", report.precisions[0],
              report.precisions[1], report.precisions[2], report.precisions[3]);
  std::printf("brevity penalty = %.4f (hyp %lld tokens, ref %lld)\n", report.brevity_penalty,
              static_cast<long long>(report.hyp_length),
              static_cast<long long>(report.ref_length));
  return 0;
}

int run_significance(const std::string& hyp_a, const std::string& hyp_b, const std::string& ref,
                     int resamples, double p, uint64_t seed) {
  auto res = bootstrap_significance(read_lines(hyp_a), read_lines(hyp_b), read_lines(ref),
                                    resamples, p, seed);
  const char* verdict = res.better == 'A'   ? "A is significantly better"
                        : res.better == 'B' ? "B is significantly better"
                                            : "no significant difference";
  std::printf("%s (win fraction A = %.4f, p_value = %.4f, threshold p < %.2f)\n", verdict,
              res.win_fraction_a, res.p_value, p);
  return 0;
}

// ------------------------------------------------------------------ params

int run_params(int d_model, int d_ff, int heads, int src_vocab, int tgt_vocab, bool share,
               bool tie, const std::string& config_file) {
  ModelConfig base;
  if (!config_file.empty()) {
    base = model_config_from_json(read_json_file(config_file));
  } else {
    base.d_model = d_model;
    base.d_ff = d_ff;
    base.n_heads = heads;
    base.src_vocab_size = src_vocab;
    base.tgt_vocab_size = tgt_vocab;
    base.share_src_tgt_embedding = share;
    base.tie_output_projection = tie;
  }
  std::printf("%-24s %15s\n", "model", "parameters");
  auto row = [&](const std::string& name, StackingMode mode) {
    ModelConfig c = base;
    c.stacking = mode;
    std::printf("%-24s %15lld\n", name.c_str(), static_cast<long long>(count_parameters(c)));
  };
  for (int k : {1, 2, 6}) row("RS, k=" + std::to_string(k), StackingMode::recurrent(k));
  for (int n : {1, 2, 6}) row(std::to_string(n) + "-layer vanilla", StackingMode::vanilla(n, n));
  return 0;
}

// -------------------------------------------------------- sweep-recurrence

struct SweepArgs {
  std::string model, src, ref, out;
  int min_k = 1, max_k = 8;
  int beam = 4;
  double alpha = 0.6;
  bool greedy = false;
  int max_len_a = 10, max_len_b = 2;
};

int run_sweep(const SweepArgs& a) {
  auto model = load_model_dir(a.model);
  auto src = read_lines(a.src);
  auto ref = read_lines(a.ref);
  DecodeConfig dc;
  dc.beam_size = a.beam;
  dc.alpha = a.alpha;
  dc.max_len_a = a.max_len_a;
  dc.max_len_b = a.max_len_b;
  std::vector<int> ks;
  for (int k = a.min_k; k <= a.max_k; ++k) ks.push_back(k);
  auto rows =
      recurrence_sweep(model.weights, model.src_vocab, model.tgt_vocab, src, ref, ks, dc, a.greedy);

  std::vector<std::string> table;
  table.push_back("k_dec\tBLEU\tseconds");
  std::printf("k_dec\tBLEU\tseconds\n");
  for (const auto& r : rows) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%d\t%.2f\t%.3f", r.dec_recurrences, r.bleu, r.seconds);
    table.push_back(buf);
    std::printf("%s\n", buf);
  }
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_lines((fs::path(a.out) / "sweep.txt").string(), table);
    OrderedJson resolved;
    resolved["command"] = "sweep-recurrence";
    resolved["model"] = a.model;
    resolved["src"] = a.src;
    resolved["ref"] = a.ref;
    resolved["range"] = {a.min_k, a.max_k};
    resolved["decode"] = decode_config_to_json(dc, a.greedy);
    echo_config(a.out, resolved);
  }
  return 0;
}

// ----------------------------------------------------------------- gen-toy

int run_gen_toy(const ToySpec& spec, const std::string& out) {
  auto data = gen_toy(spec);
  write_toy(data, out);
  OrderedJson resolved;
  resolved["command"] = "gen-toy";
  resolved["task"] = spec.task;
  resolved["n_train"] = spec.n_train;
  resolved["n_test"] = spec.n_test;
  resolved["n_mono"] = spec.n_mono;
  resolved["vocab"] = spec.vocab;
  resolved["min_len"] = spec.min_len;
  resolved["max_len"] = spec.max_len;
  resolved["ambiguity"] = spec.ambiguity;
  resolved["seed"] = spec.seed;
  echo_config(out, resolved);
  std::string mono_note =
      data.mono.empty() ? "" : " / " + std::to_string(data.mono.size()) + " mono";
  std::printf("wrote %zu train / %zu test pairs%s to %s\n", data.train.size(), data.test.size(),
              mono_note.c_str(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rsnmt: encoder-decoder transformers with recurrently stacked (shared) layers"};
  app.require_subcommand(1);
  int rc = 0;

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model on a parallel corpus");
  t->add_option("--src", train.src, "source-side training file")->required();
  t->add_option("--tgt", train.tgt, "target-side training file")->required();
  t->add_option("--out", train.out, "output model directory")->required();
  t->add_option("--config", train.config_file, "JSON config (flags override it)");
  t->add_option("--stacking", train.stacking, "recurrent|vanilla");
  t->add_option("--recurrences", train.recurrences, "RS depth k");
  t->add_option("--enc-layers", train.enc_layers, "vanilla encoder layers");
  t->add_option("--dec-layers", train.dec_layers, "vanilla decoder layers");
  t->add_option("--d-model", train.d_model);
  t->add_option("--d-ff", train.d_ff);
  t->add_option("--heads", train.heads);
  t->add_option("--max-positions", train.max_positions);
  t->add_option("--dropout", train.dropout);
  t->add_flag("--share-embeddings", train.share_embeddings, "share source/target embedding");
  t->add_flag("--tie-output", train.tie_output, "tie output projection to target embedding");
  t->add_option("--steps", train.steps);
  t->add_option("--warmup", train.warmup);
  t->add_option("--base-lr", train.base_lr);
  t->add_option("--label-smoothing", train.label_smoothing);
  t->add_option("--checkpoint-every", train.checkpoint_every);
  t->add_option("--keep-last", train.keep_last);
  t->add_option("--batch-tokens", train.batch_tokens);
  t->add_option("--vocab-max", train.vocab_max);
  t->add_option("--train-fraction", train.train_fraction, "train on a corpus subsample");
  t->add_option("--init-from-teacher", train.init_from_teacher,
                "vanilla teacher model dir for layer transfer");
  t->add_option("--l-enc", train.l_enc, "teacher encoder layer to copy (1-based)");
  t->add_option("--l-dec", train.l_dec, "teacher decoder layer to copy (1-based)");
  t->add_option("--seed", train.seed);
  t->callback([&] { rc = run_train(train); });

  TranslateArgs tr;
  auto* x = app.add_subcommand("translate", "Decode a file with a trained model");
  x->add_option("--model", tr.model, "model directory")->required();
  x->add_option("--input", tr.input, "source sentences, one per line")->required();
  x->add_option("--out", tr.out, "output directory")->required();
  x->add_option("--beam", tr.beam);
  x->add_option("--alpha", tr.alpha, "length-penalty exponent");
  x->add_flag("--greedy", tr.greedy, "greedy search instead of beam");
  x->add_option("--enc-recurrence", tr.enc_recurrence, "encoder recurrence override");
  x->add_option("--dec-recurrence", tr.dec_recurrence, "decoder recurrence override");
  x->add_option("--max-len-a", tr.max_len_a);
  x->add_option("--max-len-b", tr.max_len_b);
  x->add_flag("--time", tr.time, "report wall time incl. model load and write");
  x->add_option("--attention-out", tr.attention_out,
                "export attention traces for the first N sentences");
  x->callback([&] { rc = run_translate(tr); });

  DistillArgs di;
  auto* d = app.add_subcommand("distill", "Generate a pseudo-parallel corpus with a teacher");
  d->add_option("--model", di.model, "teacher model directory")->required();
  d->add_option("--src", di.src, "source sentences")->required();
  d->add_option("--ref", di.ref, "reference targets for the similarity report");
  d->add_option("--out", di.out, "output directory")->required();
  d->add_option("--beam", di.beam);
  d->add_option("--alpha", di.alpha);
  d->add_option("--sample", di.sample, "similarity-report sample size");
  d->add_option("--seed", di.seed);
  d->callback([&] { rc = run_distill(di); });

  AugmentArgs au;
  auto* g = app.add_subcommand("augment", "Back-translate monolingual data");
  g->add_option("--model", au.model, "reverse-direction model directory")->required();
  g->add_option("--mono", au.mono, "target-side monolingual file")->required();
  g->add_option("--out", au.out, "output directory")->required();
  g->add_flag("--mix", au.mix, "concatenate the original corpus");
  g->add_option("--orig-src", au.orig_src);
  g->add_option("--orig-tgt", au.orig_tgt);
  g->add_option("--beam", au.beam);
  g->add_option("--alpha", au.alpha);
  g->add_option("--seed", au.seed);
  g->callback([&] { rc = run_augment(au); });

  std::string avg_dir, avg_out;
  int avg_last = 10;
  auto* av = app.add_subcommand("average", "Average the last N checkpoints of a run");
  av->add_option("--dir", avg_dir, "directory with ckpt-<step>.rsnmt files")->required();
  av->add_option("--last", avg_last, "how many checkpoints");
  av->add_option("--out", avg_out, "output checkpoint path");
  av->callback([&] { rc = run_average(avg_dir, avg_last, avg_out); });

  std::string bleu_hyp, bleu_ref;
  bool bleu_no_lowercase = false;
  auto* b = app.add_subcommand("bleu", "Corpus BLEU of a hypothesis file");
  b->add_option("--hyp", bleu_hyp)->required();
  b->add_option("--ref", bleu_ref)->required();
  b->add_flag("--no-lowercase", bleu_no_lowercase, "case-sensitive scoring");
  b->callback([&] { rc = run_bleu(bleu_hyp, bleu_ref, !bleu_no_lowercase); });

  std::string sig_a, sig_b, sig_ref;
  int sig_resamples = 1000;
  double sig_p = 0.05;
  uint64_t sig_seed = env_seed();
  auto* s = app.add_subcommand("significance", "Paired bootstrap between two systems");
  s->add_option("--hyp-a", sig_a)->required();
  s->add_option("--hyp-b", sig_b)->required();
  s->add_option("--ref", sig_ref)->required();
  s->add_option("--resamples", sig_resamples);
  s->add_option("--p", sig_p);
  s->add_option("--seed", sig_seed);
  s->callback(
      [&] { rc = run_significance(sig_a, sig_b, sig_ref, sig_resamples, sig_p, sig_seed); });

  int p_d_model = 512, p_d_ff = 2048, p_heads = 8, p_src_vocab = 16000, p_tgt_vocab = 16000;
  bool p_share = false, p_tie = false;
  std::string p_config;
  auto* pc = app.add_subcommand("params", "Parameter counts across stacking modes");
  pc->add_option("--config", p_config, "model config JSON");
  pc->add_option("--d-model", p_d_model);
  pc->add_option("--d-ff", p_d_ff);
  pc->add_option("--heads", p_heads);
  pc->add_option("--src-vocab", p_src_vocab);
  pc->add_option("--tgt-vocab", p_tgt_vocab);
  pc->add_flag("--share-embeddings", p_share);
  pc->add_flag("--tie-output", p_tie);
  pc->callback([&] {
    rc = run_params(p_d_model, p_d_ff, p_heads, p_src_vocab, p_tgt_vocab, p_share, p_tie,
                    p_config);
  });

  SweepArgs sw;
  auto* sr =
      app.add_subcommand("sweep-recurrence", "Decode with every decoder recurrence in a range");
  sr->add_option("--model", sw.model)->required();
  sr->add_option("--src", sw.src)->required();
  sr->add_option("--ref", sw.ref)->required();
  sr->add_option("--out", sw.out, "directory for the sweep table");
  sr->add_option("--min", sw.min_k);
  sr->add_option("--max", sw.max_k);
  sr->add_option("--beam", sw.beam);
  sr->add_option("--alpha", sw.alpha);
  sr->add_flag("--greedy", sw.greedy);
  sr->add_option("--max-len-a", sw.max_len_a);
  sr->add_option("--max-len-b", sw.max_len_b);
  sr->callback([&] { rc = run_sweep(sw); });

  ToySpec toy;
  std::string toy_out;
  toy.seed = env_seed();
  auto* ty = app.add_subcommand("gen-toy", "Generate a synthetic corpus");
  ty->add_option("--task", toy.task, "copy|reverse|lexicon");
  ty->add_option("--train", toy.n_train);
  ty->add_option("--test", toy.n_test);
  ty->add_option("--mono", toy.n_mono);
  ty->add_option("--vocab", toy.vocab);
  ty->add_option("--min-len", toy.min_len);
  ty->add_option("--max-len", toy.max_len);
  ty->add_option("--ambiguity", toy.ambiguity, "lexicon task: ambiguous word fraction");
  ty->add_option("--seed", toy.seed);
  ty->add_option("--out", toy_out, "output directory")->required();
  ty->callback([&] { rc = run_gen_toy(toy, toy_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}
