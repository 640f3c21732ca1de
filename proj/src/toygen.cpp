#include "rsnmt/toygen.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <unordered_set>

namespace rsnmt {

namespace {

std::string word(const char* prefix, int i) {
  return std::string(prefix) + (i < 10 ? "0" : "") + std::to_string(i);
}

std::vector<int> random_sentence(Rng& rng, int vocab, int min_len, int max_len) {
  int len = min_len + static_cast<int>(rng.below(max_len - min_len + 1));
  std::vector<int> s(static_cast<size_t>(len));
  for (auto& t : s) t = static_cast<int>(rng.below(vocab));
  return s;
}

std::string src_text(const std::vector<int>& s) {
  std::vector<std::string> toks;
  toks.reserve(s.size());
  for (int t : s) toks.push_back(word("w", t));
  return join_tokens(toks);
}

}  // namespace

ToyData gen_toy(const ToySpec& spec) {
  if (spec.task != "copy" && spec.task != "reverse" && spec.task != "lexicon") {
    throw ConfigError("gen_toy: unknown task '" + spec.task + "'");
  }
  if (spec.vocab < 2 || spec.min_len < 1 || spec.max_len < spec.min_len) {
    throw ConfigError("gen_toy: bad sizes");
  }
  Rng rng(spec.seed);

  // Lexicon mapping: primary target is a seeded permutation; ambiguous words
  // have a secondary target used 30% of the time.
  std::vector<int> primary(static_cast<size_t>(spec.vocab));
  std::iota(primary.begin(), primary.end(), 0);
  rng.shuffle(primary);
  std::vector<int> secondary(static_cast<size_t>(spec.vocab));
  for (int i = 0; i < spec.vocab; ++i) {
    secondary[static_cast<size_t>(i)] = (primary[static_cast<size_t>(i)] + 1) % spec.vocab;
  }
  std::vector<uint8_t> ambiguous(static_cast<size_t>(spec.vocab), 0);
  for (int i = 0; i < spec.vocab; ++i) {
    ambiguous[static_cast<size_t>(i)] = rng.uniform() < spec.ambiguity ? 1 : 0;
  }

  auto target_text = [&](const std::vector<int>& s) {
    std::vector<std::string> toks;
    if (spec.task == "copy") {
      for (int t : s) toks.push_back(word("w", t));
    } else if (spec.task == "reverse") {
      for (auto it = s.rbegin(); it != s.rend(); ++it) toks.push_back(word("w", *it));
    } else {
      for (int t : s) {
        int tgt = primary[static_cast<size_t>(t)];
        if (ambiguous[static_cast<size_t>(t)] && rng.uniform() < 0.3) {
          tgt = secondary[static_cast<size_t>(t)];
        }
        toks.push_back(word("t", tgt));
      }
    }
    return join_tokens(toks);
  };

  ToyData data;
  std::unordered_set<std::string> train_sources;
  for (int i = 0; i < spec.n_train; ++i) {
    auto s = random_sentence(rng, spec.vocab, spec.min_len, spec.max_len);
    auto text = src_text(s);
    train_sources.insert(text);
    data.train.push(text, target_text(s));
  }
  int made = 0, guard = 0;
  while (made < spec.n_test && guard < spec.n_test * 100) {
    ++guard;
    auto s = random_sentence(rng, spec.vocab, spec.min_len, spec.max_len);
    auto text = src_text(s);
    if (train_sources.count(text)) continue;
    data.test.push(text, target_text(s));
    ++made;
  }
  for (int i = 0; i < spec.n_mono; ++i) {
    auto s = random_sentence(rng, spec.vocab, spec.min_len, spec.max_len);
    data.mono.push_back(target_text(s));
  }
  return data;
}

void write_toy(const ToyData& data, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_lines((fs::path(dir) / "train.src").string(), data.train.src);
  write_lines((fs::path(dir) / "train.tgt").string(), data.train.tgt);
  write_lines((fs::path(dir) / "test.src").string(), data.test.src);
  write_lines((fs::path(dir) / "test.tgt").string(), data.test.tgt);
  if (!data.mono.empty()) write_lines((fs::path(dir) / "mono.txt").string(), data.mono);
}

}  // namespace rsnmt
