#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "rsnmt/pipeline.hpp"
#include "rsnmt/transfer.hpp"
#include "test_util.hpp"

using namespace rsnmt;
using testutil::layer_tensors;
using testutil::tiny_config;

namespace {

struct TeacherFixture {
  testutil::TempDir tmp{"transfer"};
  ModelConfig teacher_cfg = tiny_config(StackingMode::vanilla(3, 3));
  ModelWeights<float> teacher;
  std::string ckpt_path;

  TeacherFixture() : teacher(build_model<float>(teacher_cfg, 42)) {
    ckpt_path = tmp.file("teacher.rsnmt");
    save_checkpoint(ckpt_path, teacher, 100);
  }
};

}  // namespace

TEST_CASE("layer transfer copies the chosen teacher layers bit-exactly") {
  TeacherFixture f;
  auto student_cfg = tiny_config(StackingMode::recurrent(6));
  TransferConfig t;
  t.teacher_checkpoint = f.ckpt_path;
  t.l_enc = 2;
  t.l_dec = 3;
  auto before = std::filesystem::last_write_time(f.ckpt_path);
  auto init = init_from_teacher(student_cfg, t, 7);

  auto enc_student = layer_tensors(init.weights.encoder_layers[0]);
  auto enc_teacher = layer_tensors(f.teacher.encoder_layers[1]);
  for (size_t i = 0; i < enc_student.size(); ++i) {
    CHECK(enc_student[i]->data == enc_teacher[i]->data);
  }
  auto dec_student = layer_tensors(init.weights.decoder_layers[0]);
  auto dec_teacher = layer_tensors(f.teacher.decoder_layers[2]);
  for (size_t i = 0; i < dec_student.size(); ++i) {
    CHECK(dec_student[i]->data == dec_teacher[i]->data);
  }
  CHECK(init.weights.src_embedding->data == f.teacher.src_embedding->data);
  CHECK(init.weights.output_projection->data == f.teacher.output_projection->data);

  // the teacher file itself is untouched
  CHECK(std::filesystem::last_write_time(f.ckpt_path) == before);

  // provenance carries the lineage
  CHECK(init.provenance["teacher"] == f.ckpt_path);
  CHECK(init.provenance["l_enc"] == 2);
  CHECK(init.provenance["l_dec"] == 3);

  SUBCASE("copy flags can be turned off") {
    t.copy_embeddings = false;
    auto no_emb = init_from_teacher(student_cfg, t, 7);
    CHECK(no_emb.weights.src_embedding->data != f.teacher.src_embedding->data);
  }
}

TEST_CASE("layer transfer range and mode errors") {
  TeacherFixture f;
  auto student_cfg = tiny_config(StackingMode::recurrent(6));
  TransferConfig t;
  t.teacher_checkpoint = f.ckpt_path;

  t.l_enc = 4;  // teacher has 3
  CHECK_THROWS_AS(init_from_teacher(student_cfg, t, 7), ConfigError);
  t.l_enc = 0;
  CHECK_THROWS_AS(init_from_teacher(student_cfg, t, 7), ConfigError);
  t.l_enc = 1;
  t.l_dec = 4;
  CHECK_THROWS_AS(init_from_teacher(student_cfg, t, 7), ConfigError);
  t.l_dec = 1;

  // teacher must be vanilla
  auto rs_teacher = build_model<float>(tiny_config(StackingMode::recurrent(3)), 1);
  auto rs_path = f.tmp.file("rs.rsnmt");
  save_checkpoint(rs_path, rs_teacher, 1);
  TransferConfig bad = t;
  bad.teacher_checkpoint = rs_path;
  CHECK_THROWS_AS(init_from_teacher(student_cfg, bad, 7), ConfigError);

  // widths must match
  auto wide = tiny_config(StackingMode::recurrent(6), 13, 32, 64, 2);
  CHECK_THROWS_AS(init_from_teacher(wide, t, 7), ConfigError);

  // student must be recurrent
  CHECK_THROWS_AS(init_from_teacher(tiny_config(StackingMode::vanilla(1, 1)), t, 7),
                  ConfigError);
}

TEST_CASE("an initialized student stays trainable") {
  TeacherFixture f;
  auto student_cfg = tiny_config(StackingMode::recurrent(2));
  TransferConfig t;
  t.teacher_checkpoint = f.ckpt_path;
  auto init = init_from_teacher(student_cfg, t, 7);

  Rng rng(1);
  auto src = testutil::random_id_batch(rng, 2, 3, 5, student_cfg.src_vocab_size);
  auto tgt = testutil::random_id_batch(rng, 2, 3, 5, student_cfg.tgt_vocab_size);
  TrainConfig tc;
  tc.base_lr = 1.0;
  tc.warmup_steps = 10;
  auto before = init.weights.encoder_layers[0].self_attn.wq->data;
  auto opt = make_adam_state(init.weights);
  train_step(init.weights, src, tgt, opt, tc, 1);
  CHECK(init.weights.encoder_layers[0].self_attn.wq->data != before);
}

namespace {

// A "teacher" that copies its input: identity lexicon over a tiny shared
// vocabulary, trained just long enough to be exact on short sentences.
LoadedModel overfit_identity_teacher(const testutil::TempDir& tmp) {
  ParallelCorpus corpus;
  Rng rng(55);
  for (int i = 0; i < 160; ++i) {
    int len = 1 + static_cast<int>(rng.below(3));
    std::vector<std::string> toks;
    for (int j = 0; j < len; ++j)
      toks.push_back("w" + std::to_string(rng.below(6)));
    corpus.push(join_tokens(toks), join_tokens(toks));
  }
  TrainJob job;
  job.model = testutil::tiny_config(StackingMode::vanilla(1, 1), 0, 32, 64, 2);
  job.model.share_src_tgt_embedding = true;
  job.model.tie_output_projection = true;
  job.train.total_steps = 400;
  job.train.warmup_steps = 80;
  job.train.base_lr = 1.0;
  job.train.label_smoothing = 0.0;
  job.train.seed = 5;
  job.batch_tokens = 256;
  job.out_dir = tmp.file("identity-teacher");
  run_training(job, corpus);
  return load_model_dir(job.out_dir);
}

}  // namespace

TEST_CASE("distillation: counts, determinism, and the degenerate identity teacher") {
  testutil::TempDir tmp("distill");
  auto teacher = overfit_identity_teacher(tmp);

  std::vector<std::string> sources = {"w0 w1", "w2", "w3 w4 w5", "w1 w1", "w5 w0"};
  DistillConfig cfg;
  cfg.decode.beam_size = 2;
  cfg.decode.alpha = 0.6;
  cfg.sample_size = 5;
  cfg.seed = 3;

  DistillReport report;
  auto pseudo = distill_corpus(teacher, sources, cfg, &sources, &report);
  CHECK(pseudo.size() + report.skipped.size() == sources.size());
  CHECK(report.produced == static_cast<int64_t>(pseudo.size()));

  // identity teacher: pseudo-targets equal sources, similarity BLEU = 100
  REQUIRE(report.skipped.empty());
  for (size_t i = 0; i < sources.size(); ++i) CHECK(pseudo.tgt[i] == sources[i]);
  CHECK(report.sample_bleu == doctest::Approx(100.0));

  DistillReport report2;
  auto pseudo2 = distill_corpus(teacher, sources, cfg, &sources, &report2);
  CHECK(pseudo.tgt == pseudo2.tgt);  // fixed teacher + settings + seed
}

TEST_CASE("back-translation orientation and mixing") {
  testutil::TempDir tmp("backtr");
  auto reverse_model = overfit_identity_teacher(tmp);

  std::vector<std::string> mono = {"w0", "w1 w2", "w3", "w4 w5", "w2 w2"};
  ParallelCorpus original;
  original.push("w0 w0", "w1 w1");
  original.push("w2", "w3");

  DistillConfig cfg;
  cfg.decode.beam_size = 1;
  cfg.mix_original = false;
  DistillReport report;
  auto pseudo = back_translate(reverse_model, mono, cfg, &original, &report);
  CHECK(pseudo.size() == mono.size());
  for (size_t i = 0; i < mono.size(); ++i) {
    CHECK(pseudo.tgt[i] == mono[i]);  // monolingual text lands on the target side
  }

  cfg.mix_original = true;
  auto mixed = back_translate(reverse_model, mono, cfg, &original, &report);
  CHECK(mixed.size() == original.size() + mono.size());
  CHECK(mixed.src[0] == "w0 w0");
  CHECK(mixed.tgt[original.size()] == mono[0]);
}

TEST_CASE("combined transfer: provenance records both lineages") {
  testutil::TempDir tmp("combined");
  auto teacher = overfit_identity_teacher(tmp);
  std::string teacher_dir = tmp.file("identity-teacher");

  // distill a corpus with the teacher, write it out with its report
  std::vector<std::string> sources;
  Rng rng(8);
  for (int i = 0; i < 40; ++i) {
    std::vector<std::string> toks;
    int len = 1 + static_cast<int>(rng.below(3));
    for (int j = 0; j < len; ++j) toks.push_back("w" + std::to_string(rng.below(6)));
    sources.push_back(join_tokens(toks));
  }
  DistillConfig dcfg;
  dcfg.decode.beam_size = 1;
  DistillReport report;
  auto pseudo = distill_corpus(teacher, sources, dcfg, nullptr, &report);
  auto distill_dir = tmp.path() / "distilled";
  std::filesystem::create_directories(distill_dir);
  write_lines((distill_dir / "train.src").string(), pseudo.src);
  write_lines((distill_dir / "train.tgt").string(), pseudo.tgt);
  write_json_file((distill_dir / "report.json").string(), report.to_json(teacher_dir));

  // train a student initialized from the teacher on the distilled corpus
  TrainJob job;
  job.model = testutil::tiny_config(StackingMode::recurrent(2), 0, 32, 64, 2);
  job.model.share_src_tgt_embedding = true;
  job.model.tie_output_projection = true;
  job.train.total_steps = 3;
  job.train.warmup_steps = 10;
  job.train.seed = 9;
  job.batch_tokens = 256;
  job.init = TeacherInit{teacher_dir, 1, 1, true, true};
  job.out_dir = tmp.file("student");
  auto outcome = run_training_files(job, (distill_dir / "train.src").string(),
                                    (distill_dir / "train.tgt").string());

  auto ckpt = load_checkpoint(outcome.checkpoint_path);
  CHECK(ckpt.provenance.contains("l_enc"));
  CHECK(ckpt.provenance.contains("distilled_from"));
  CHECK(ckpt.provenance["distilled_from"] == teacher_dir);
}
