#include "rsnmt/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace rsnmt {

namespace {
const char* kReservedTokens[kNumReserved] = {"<pad>", "<s>", "</s>", "<unk>"};
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* t : kReservedTokens) push(t);
}

void Vocabulary::push(const std::string& token) {
  index_.emplace(token, static_cast<int32_t>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& sentences, size_t max_size) {
  if (max_size <= static_cast<size_t>(kNumReserved)) {
    throw ConfigError("build_vocab: max_size must exceed the " + std::to_string(kNumReserved) +
                      " reserved ids");
  }
  std::unordered_map<std::string, int64_t> freq;
  bool any = false;
  for (const auto& s : sentences) {
    for (auto& t : tokenize(s)) {
      ++freq[t];
      any = true;
    }
  }
  if (sentences.empty() || !any) throw DataError("build_vocab: empty corpus");

  std::vector<std::pair<std::string, int64_t>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  for (const auto& [tok, n] : items) {
    (void)n;
    if (v.tokens_.size() >= max_size) break;
    if (v.index_.count(tok)) continue;  // user text colliding with a reserved token
    v.push(tok);
  }
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("vocabulary: cannot open " + path);
  Vocabulary v;
  std::string line;
  int32_t lineno = 0;
  while (std::getline(in, line)) {
    if (lineno < kNumReserved) {
      if (line != kReservedTokens[lineno]) {
        throw FormatError("vocabulary: line " + std::to_string(lineno) + " of " + path +
                          " must be reserved token " + kReservedTokens[lineno]);
      }
    } else {
      if (line.empty()) throw FormatError("vocabulary: empty token at line " + std::to_string(lineno));
      if (v.index_.count(line)) {
        throw FormatError("vocabulary: duplicate token '" + line + "' in " + path);
      }
      v.push(line);
    }
    ++lineno;
  }
  if (lineno < kNumReserved) throw FormatError("vocabulary: " + path + " is truncated");
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("vocabulary: cannot write " + path);
  for (const auto& t : tokens_) out << t << '\n';
}

int32_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int32_t id) const {
  if (id < 0 || id >= static_cast<int32_t>(tokens_.size())) {
    throw DataError("vocabulary: id " + std::to_string(id) + " out of range (size " +
                    std::to_string(tokens_.size()) + ")");
  }
  return tokens_[static_cast<size_t>(id)];
}

std::vector<int32_t> Vocabulary::encode(const std::string& text) const {
  std::vector<int32_t> out;
  auto toks = tokenize(text);
  out.reserve(toks.size() + 2);
  out.push_back(kBosId);
  for (const auto& t : toks) out.push_back(id(t));
  out.push_back(kEosId);
  return out;
}

std::string Vocabulary::decode(std::span<const int32_t> ids) const {
  std::vector<std::string> toks;
  for (int32_t i : ids) {
    if (is_reserved_id(i)) continue;
    toks.push_back(token(i));
  }
  return join_tokens(toks);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  for (const auto& l : lines) out << l << '\n';
}

ParallelCorpus load_parallel(const std::string& src_path, const std::string& tgt_path) {
  auto src = read_lines(src_path);
  auto tgt = read_lines(tgt_path);
  if (src.size() != tgt.size()) {
    throw DataError("parallel corpus: " + src_path + " has " + std::to_string(src.size()) +
                    " lines but " + tgt_path + " has " + std::to_string(tgt.size()));
  }
  ParallelCorpus c;
  for (size_t i = 0; i < src.size(); ++i) {
    if (tokenize(src[i]).empty() || tokenize(tgt[i]).empty()) continue;
    c.push(src[i], tgt[i]);
  }
  return c;
}

Batch make_batch(const std::vector<std::vector<int32_t>>& seqs) {
  Batch b;
  b.rows = static_cast<int64_t>(seqs.size());
  for (const auto& s : seqs) b.cols = std::max<int64_t>(b.cols, static_cast<int64_t>(s.size()));
  b.ids.assign(static_cast<size_t>(b.rows * b.cols), kPadId);
  b.mask.assign(static_cast<size_t>(b.rows * b.cols), 0);
  for (int64_t r = 0; r < b.rows; ++r) {
    const auto& s = seqs[static_cast<size_t>(r)];
    b.lengths.push_back(static_cast<int32_t>(s.size()));
    for (size_t c = 0; c < s.size(); ++c) {
      b.ids[static_cast<size_t>(r * b.cols) + c] = s[c];
      b.mask[static_cast<size_t>(r * b.cols) + c] = 1;
    }
  }
  return b;
}

std::vector<EncodedPair> encode_corpus(const ParallelCorpus& corpus, const Vocabulary& src_vocab,
                                       const Vocabulary& tgt_vocab) {
  std::vector<EncodedPair> out;
  out.reserve(corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    out.emplace_back(src_vocab.encode(corpus.src[i]), tgt_vocab.encode(corpus.tgt[i]));
  }
  return out;
}

std::vector<std::pair<Batch, Batch>> make_batches(const std::vector<EncodedPair>& pairs,
                                                  int64_t batch_size_tokens, uint64_t seed,
                                                  int64_t max_positions) {
  int64_t longest = 0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    int64_t len = std::max(pairs[i].first.size(), pairs[i].second.size());
    if (len > max_positions) {
      throw DataError("sentence " + std::to_string(i) + " has length " + std::to_string(len) +
                      " exceeding max positions " + std::to_string(max_positions));
    }
    longest = std::max(longest, len);
  }
  if (batch_size_tokens < longest) {
    throw ConfigError("batch_size_tokens " + std::to_string(batch_size_tokens) +
                      " below longest sentence length " + std::to_string(longest));
  }

  // Length-sorted grouping keeps padding small; ties broken by original index
  // so the grouping is stable across epochs.
  std::vector<size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    int64_t la = std::max(pairs[a].first.size(), pairs[a].second.size());
    int64_t lb = std::max(pairs[b].first.size(), pairs[b].second.size());
    if (la != lb) return la < lb;
    return a < b;
  });

  std::vector<std::pair<Batch, Batch>> batches;
  std::vector<std::vector<int32_t>> src_group, tgt_group;
  int64_t group_max = 0;
  auto flush = [&] {
    if (src_group.empty()) return;
    batches.emplace_back(make_batch(src_group), make_batch(tgt_group));
    src_group.clear();
    tgt_group.clear();
    group_max = 0;
  };
  for (size_t idx : order) {
    int64_t len = std::max(pairs[idx].first.size(), pairs[idx].second.size());
    int64_t new_max = std::max(group_max, len);
    if (!src_group.empty() &&
        static_cast<int64_t>(src_group.size() + 1) * new_max > batch_size_tokens) {
      flush();
      new_max = len;
    }
    src_group.push_back(pairs[idx].first);
    tgt_group.push_back(pairs[idx].second);
    group_max = new_max;
  }
  flush();

  Rng rng(seed);
  rng.shuffle(batches);
  return batches;
}

ParallelCorpus subsample(const ParallelCorpus& corpus, double fraction, uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0) {
    throw ConfigError("subsample: fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  size_t n = corpus.size();
  size_t keep = static_cast<size_t>(std::ceil(fraction * static_cast<double>(n)));
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  ParallelCorpus out;
  for (size_t i : idx) out.push(corpus.src[i], corpus.tgt[i]);
  return out;
}

}  // namespace rsnmt
