#include "rsnmt/pipeline.hpp"

#include <filesystem>
#include <fstream>

namespace rsnmt {

namespace fs = std::filesystem;

LoadedModel load_model_dir(const std::string& dir) {
  fs::path p(dir);
  LoadedModel m{load_weights((p / kCheckpointFile).string()),
                Vocabulary::load((p / kSrcVocabFile).string()),
                Vocabulary::load((p / kTgtVocabFile).string())};
  if (static_cast<int>(m.src_vocab.size()) != m.weights.config.src_vocab_size ||
      static_cast<int>(m.tgt_vocab.size()) != m.weights.config.tgt_vocab_size) {
    throw ConfigError("model dir " + dir + ": vocabulary files do not match the checkpoint");
  }
  return m;
}

namespace {

struct CheckpointRing {
  fs::path dir;
  int keep_last;
  std::vector<fs::path> written;

  void add(const ModelWeights<float>& w, int64_t step, const OrderedJson& provenance) {
    fs::path p = dir / ("ckpt-" + std::to_string(step) + ".rsnmt");
    save_checkpoint(p.string(), w, step, provenance);
    written.push_back(p);
    while (static_cast<int>(written.size()) > keep_last) {
      fs::remove(written.front());
      written.erase(written.begin());
    }
  }
};

}  // namespace

TrainOutcome run_training(TrainJob job, const ParallelCorpus& corpus) {
  job.train.validate();
  if (corpus.size() == 0) throw DataError("train: empty corpus");
  fs::create_directories(job.out_dir);

  ParallelCorpus working = job.train_fraction < 1.0
                               ? subsample(corpus, job.train_fraction, job.train.seed)
                               : corpus;

  // Vocabularies: reuse the teacher's under layer transfer (embedding copies
  // are meaningless otherwise), build fresh from the corpus if not.
  Vocabulary src_vocab, tgt_vocab;
  OrderedJson provenance = OrderedJson::object();
  std::optional<TransferResult> transferred;
  if (job.init) {
    src_vocab = Vocabulary::load((fs::path(job.init->teacher_dir) / kSrcVocabFile).string());
    tgt_vocab = Vocabulary::load((fs::path(job.init->teacher_dir) / kTgtVocabFile).string());
  } else if (job.model.share_src_tgt_embedding) {
    std::vector<std::string> both = working.src;
    both.insert(both.end(), working.tgt.begin(), working.tgt.end());
    src_vocab = Vocabulary::build(both, job.vocab_max);
    tgt_vocab = src_vocab;
  } else {
    src_vocab = Vocabulary::build(working.src, job.vocab_max);
    tgt_vocab = Vocabulary::build(working.tgt, job.vocab_max);
  }
  job.model.src_vocab_size = static_cast<int>(src_vocab.size());
  job.model.tgt_vocab_size = static_cast<int>(tgt_vocab.size());

  ModelWeights<float> weights = [&] {
    if (job.init) {
      TransferConfig t;
      t.teacher_checkpoint = (fs::path(job.init->teacher_dir) / kCheckpointFile).string();
      t.l_enc = job.init->l_enc;
      t.l_dec = job.init->l_dec;
      t.copy_embeddings = job.init->copy_embeddings;
      t.copy_output_projection = job.init->copy_output_projection;
      transferred = init_from_teacher(job.model, t, job.train.seed);
      return transferred->weights;
    }
    return build_model<float>(job.model, job.train.seed);
  }();
  if (transferred) provenance = transferred->provenance;
  if (job.distilled_from) provenance["distilled_from"] = *job.distilled_from;

  auto encoded = encode_corpus(working, src_vocab, tgt_vocab);

  AdamState opt = make_adam_state(weights);
  Rng dropout_rng(job.train.seed + 0x9e3779b9ull);
  CheckpointRing ring{fs::path(job.out_dir), job.train.keep_last, {}};

  std::ofstream log(fs::path(job.out_dir) / "train.log");
  TrainOutcome outcome;
  int64_t step = 0;
  uint64_t epoch = 0;
  while (step < job.train.total_steps) {
    auto batches = make_batches(encoded, job.batch_tokens, job.train.seed + epoch,
                                job.model.max_positions);
    for (const auto& [src, tgt] : batches) {
      if (step >= job.train.total_steps) break;
      ++step;
      float loss = train_step(weights, src, tgt, opt, job.train, step, &dropout_rng);
      outcome.losses.push_back(loss);
      if (log) {
        log << step << '\t' << loss << '\t' << lr_at(step, job.train, job.model.d_model) << '\n';
      }
      if (job.train.checkpoint_every > 0 && step % job.train.checkpoint_every == 0) {
        ring.add(weights, step, provenance);
      }
    }
    ++epoch;
  }

  fs::path final_path = fs::path(job.out_dir) / kCheckpointFile;
  save_checkpoint(final_path.string(), weights, step, provenance);
  src_vocab.save((fs::path(job.out_dir) / kSrcVocabFile).string());
  tgt_vocab.save((fs::path(job.out_dir) / kTgtVocabFile).string());
  write_json_file((fs::path(job.out_dir) / "config.json").string(),
                  model_config_to_json(job.model));

  outcome.checkpoint_path = final_path.string();
  outcome.out_dir = job.out_dir;
  outcome.resolved_config = job.model;
  return outcome;
}

TrainOutcome run_training_files(TrainJob job, const std::string& src_path,
                                const std::string& tgt_path) {
  if (!job.distilled_from) {
    fs::path report = fs::path(src_path).parent_path() / "report.json";
    if (fs::exists(report)) {
      auto j = read_json_file(report.string());
      if (j.contains("teacher")) job.distilled_from = j["teacher"].get<std::string>();
    }
  }
  return run_training(std::move(job), load_parallel(src_path, tgt_path));
}

std::vector<std::string> translate_lines(const LoadedModel& model,
                                         const std::vector<std::string>& input,
                                         const DecodeConfig& cfg, bool greedy) {
  std::vector<std::vector<int32_t>> ids;
  ids.reserve(input.size());
  for (const auto& line : input) ids.push_back(model.src_vocab.encode(line));
  auto decoded = decode_corpus(model.weights, ids, cfg, greedy);
  std::vector<std::string> out;
  out.reserve(decoded.hyps.size());
  for (const auto& h : decoded.hyps) out.push_back(model.tgt_vocab.decode(h.tokens));
  return out;
}

}  // namespace rsnmt
