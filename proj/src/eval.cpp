#include "rsnmt/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "rsnmt/data.hpp"

namespace rsnmt {

namespace {

std::string fold_case(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

using NgramCounts = std::map<std::vector<std::string>, int64_t>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, int order) {
  NgramCounts counts;
  if (static_cast<int>(tokens.size()) < order) return counts;
  for (size_t i = 0; i + static_cast<size_t>(order) <= tokens.size(); ++i) {
    std::vector<std::string> gram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                  tokens.begin() + static_cast<std::ptrdiff_t>(i + order));
    ++counts[gram];
  }
  return counts;
}

struct SentenceStats {
  std::array<int64_t, 4> matches{};
  std::array<int64_t, 4> totals{};
  int64_t hyp_len = 0;
  int64_t ref_len = 0;
};

SentenceStats sentence_stats(const std::vector<std::string>& hyp,
                             const std::vector<std::string>& ref, int max_order, bool lowercase) {
  std::vector<std::string> h = hyp, r = ref;
  if (lowercase) {
    for (auto& t : h) t = fold_case(t);
    for (auto& t : r) t = fold_case(t);
  }
  SentenceStats st;
  st.hyp_len = static_cast<int64_t>(h.size());
  st.ref_len = static_cast<int64_t>(r.size());
  for (int n = 1; n <= max_order; ++n) {
    auto hc = count_ngrams(h, n);
    auto rc = count_ngrams(r, n);
    int64_t total = 0, matched = 0;
    for (const auto& [gram, cnt] : hc) {
      total += cnt;
      auto it = rc.find(gram);
      if (it != rc.end()) matched += std::min(cnt, it->second);
    }
    st.totals[static_cast<size_t>(n - 1)] = total;
    st.matches[static_cast<size_t>(n - 1)] = matched;
  }
  return st;
}

EvalReport report_from_stats(const std::vector<SentenceStats>& stats,
                             const std::vector<size_t>& idx, int max_order) {
  std::array<int64_t, 4> matches{}, totals{};
  int64_t hyp_len = 0, ref_len = 0;
  for (size_t i : idx) {
    for (int n = 0; n < max_order; ++n) {
      matches[static_cast<size_t>(n)] += stats[i].matches[static_cast<size_t>(n)];
      totals[static_cast<size_t>(n)] += stats[i].totals[static_cast<size_t>(n)];
    }
    hyp_len += stats[i].hyp_len;
    ref_len += stats[i].ref_len;
  }
  EvalReport rep;
  rep.hyp_length = hyp_len;
  rep.ref_length = ref_len;
  bool zero = hyp_len == 0;
  double log_sum = 0.0;
  for (int n = 0; n < max_order; ++n) {
    // An order with no n-grams at all (every sentence shorter than n) is
    // vacuous and counts as perfect, so identical corpora always score 100.
    double p = totals[static_cast<size_t>(n)] > 0
                   ? static_cast<double>(matches[static_cast<size_t>(n)]) /
                         static_cast<double>(totals[static_cast<size_t>(n)])
                   : 1.0;
    rep.precisions[static_cast<size_t>(n)] = p;
    if (p <= 0.0) zero = true;
    else log_sum += std::log(p);
  }
  rep.brevity_penalty =
      hyp_len == 0 ? 0.0
                   : std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len) /
                                                      static_cast<double>(hyp_len)));
  rep.bleu = zero ? 0.0
                  : 100.0 * rep.brevity_penalty *
                        std::exp(log_sum / static_cast<double>(max_order));
  return rep;
}

std::vector<SentenceStats> all_stats(const std::vector<std::vector<std::string>>& hyps,
                                     const std::vector<std::vector<std::string>>& refs,
                                     int max_order, bool lowercase) {
  if (hyps.size() != refs.size()) {
    throw DataError("bleu: " + std::to_string(hyps.size()) + " hypotheses vs " +
                    std::to_string(refs.size()) + " references");
  }
  std::vector<SentenceStats> stats;
  stats.reserve(hyps.size());
  for (size_t i = 0; i < hyps.size(); ++i) {
    stats.push_back(sentence_stats(hyps[i], refs[i], max_order, lowercase));
  }
  return stats;
}

}  // namespace

EvalReport corpus_bleu(const std::vector<std::vector<std::string>>& hyps,
                       const std::vector<std::vector<std::string>>& refs, int max_order,
                       bool lowercase) {
  if (max_order < 1 || max_order > 4) throw ConfigError("bleu: max_order must be in 1..4");
  auto stats = all_stats(hyps, refs, max_order, lowercase);
  std::vector<size_t> idx(stats.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return report_from_stats(stats, idx, max_order);
}

EvalReport corpus_bleu_lines(const std::vector<std::string>& hyps,
                             const std::vector<std::string>& refs, int max_order, bool lowercase) {
  std::vector<std::vector<std::string>> h, r;
  h.reserve(hyps.size());
  r.reserve(refs.size());
  for (const auto& s : hyps) h.push_back(tokenize(s));
  for (const auto& s : refs) r.push_back(tokenize(s));
  return corpus_bleu(h, r, max_order, lowercase);
}

SignificanceResult bootstrap_significance(const std::vector<std::string>& hyp_a,
                                          const std::vector<std::string>& hyp_b,
                                          const std::vector<std::string>& refs, int resamples,
                                          double p, uint64_t seed) {
  if (hyp_a.size() != refs.size() || hyp_b.size() != refs.size()) {
    throw DataError("significance: hypothesis/reference counts differ");
  }
  if (refs.empty()) throw DataError("significance: empty input");
  std::vector<std::vector<std::string>> a, b, r;
  for (const auto& s : hyp_a) a.push_back(tokenize(s));
  for (const auto& s : hyp_b) b.push_back(tokenize(s));
  for (const auto& s : refs) r.push_back(tokenize(s));
  auto stats_a = all_stats(a, r, 4, true);
  auto stats_b = all_stats(b, r, 4, true);

  size_t n = refs.size();
  Rng rng(seed);
  double wins_a = 0.0;
  std::vector<size_t> idx(n);
  for (int s = 0; s < resamples; ++s) {
    for (size_t i = 0; i < n; ++i) idx[i] = static_cast<size_t>(rng.below(static_cast<int64_t>(n)));
    double bleu_a = report_from_stats(stats_a, idx, 4).bleu;
    double bleu_b = report_from_stats(stats_b, idx, 4).bleu;
    if (bleu_a > bleu_b) wins_a += 1.0;
    else if (bleu_a == bleu_b) wins_a += 0.5;
  }
  SignificanceResult res;
  res.win_fraction_a = wins_a / static_cast<double>(resamples);
  double losing = std::min(res.win_fraction_a, 1.0 - res.win_fraction_a);
  res.p_value = losing;
  if (1.0 - res.win_fraction_a < p) res.better = 'A';
  else if (res.win_fraction_a < p) res.better = 'B';
  else res.better = 'T';
  return res;
}

double attention_entropy(std::span<const double> row) {
  double sum = 0.0;
  for (double v : row) {
    if (v < 0.0) throw DataError("attention_entropy: negative probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw DataError("attention_entropy: row sums to " + std::to_string(sum) + ", not 1");
  }
  double h = 0.0;
  for (double v : row) {
    if (v > 0.0) h += v * std::log(v);
  }
  return -h;
}

AttentionStats compute_attention_stats(const AttentionTrace& trace) {
  AttentionStats stats;
  for (size_t l = 0; l < trace.layers.size(); ++l) {
    const auto& layer = trace.layers[l];
    std::vector<double> ent;
    for (const auto& head : layer.heads) {
      double acc = 0.0;
      for (const auto& row : head.rows) acc += attention_entropy(row);
      ent.push_back(head.rows.empty() ? 0.0 : acc / static_cast<double>(head.rows.size()));
    }
    stats.entropy.push_back(std::move(ent));
    if (l > 0) {
      const auto& prev = trace.layers[l - 1];
      std::vector<double> dists;
      for (size_t h = 0; h < layer.heads.size(); ++h) {
        double acc = 0.0;
        size_t rows = layer.heads[h].rows.size();
        for (size_t q = 0; q < rows; ++q) {
          const auto& cur_row = layer.heads[h].rows[q];
          const auto& prev_row = prev.heads[h].rows[q];
          for (size_t k = 0; k < cur_row.size(); ++k) acc += std::abs(cur_row[k] - prev_row[k]);
        }
        dists.push_back(rows == 0 ? 0.0 : acc / static_cast<double>(rows));
      }
      stats.l1_from_previous.push_back(std::move(dists));
    }
  }
  return stats;
}

namespace {

std::string gray_fill(double p) {
  int level = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(p, 0.0, 1.0))));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "rgb(%d,%d,%d)", level, level, level);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void export_attention(const AttentionTrace& trace, const AttentionStats& stats,
                      const std::string& dir, const std::string& stem) {
  if (trace.empty()) throw DataError("export_attention: empty trace");
  std::filesystem::create_directories(dir);

  nlohmann::ordered_json doc;
  doc["sentence"] = trace.sentence;
  doc["src_tokens"] = trace.src_tokens;
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (size_t l = 0; l < trace.layers.size(); ++l) {
    nlohmann::ordered_json jl;
    jl["index"] = l;
    nlohmann::ordered_json heads = nlohmann::ordered_json::array();
    for (size_t h = 0; h < trace.layers[l].heads.size(); ++h) {
      nlohmann::ordered_json jh;
      jh["index"] = h;
      jh["rows"] = trace.layers[l].heads[h].rows;
      heads.push_back(std::move(jh));
    }
    jl["heads"] = std::move(heads);
    layers.push_back(std::move(jl));
  }
  doc["layers"] = std::move(layers);
  doc["entropies"] = stats.entropy;
  doc["l1_from_previous"] = stats.l1_from_previous;

  std::ofstream json_out(std::filesystem::path(dir) / (stem + ".json"));
  if (!json_out) throw FormatError("export_attention: cannot write JSON under " + dir);
  json_out << doc.dump(2) << '\n';

  // One SVG per layer application: heads x source grid, cell = mean weight
  // over target positions, darker = stronger.
  const int cell = 18, label_w = 60, label_h = 40;
  for (size_t l = 0; l < trace.layers.size(); ++l) {
    const auto& layer = trace.layers[l];
    size_t n_heads = layer.heads.size();
    size_t n_src = layer.heads.empty() || layer.heads[0].rows.empty()
                       ? trace.src_tokens.size()
                       : layer.heads[0].rows[0].size();
    int width = label_w + static_cast<int>(n_src) * cell;
    int height = label_h + static_cast<int>(n_heads) * cell;
    std::ofstream svg(std::filesystem::path(dir) / (stem + "_layer" + std::to_string(l) + ".svg"));
    if (!svg) throw FormatError("export_attention: cannot write SVG under " + dir);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    for (size_t h = 0; h < n_heads; ++h) {
      const auto& rows = layer.heads[h].rows;
      for (size_t s = 0; s < n_src; ++s) {
        double mean = 0.0;
        for (const auto& row : rows) mean += s < row.size() ? row[s] : 0.0;
        if (!rows.empty()) mean /= static_cast<double>(rows.size());
        svg << "  <rect x=\"" << label_w + static_cast<int>(s) * cell << "\" y=\""
            << label_h + static_cast<int>(h) * cell << "\" width=\"" << cell << "\" height=\""
            << cell << "\" fill=\"" << gray_fill(mean) << "\"/>\n";
      }
      svg << "  <text x=\"2\" y=\"" << label_h + static_cast<int>(h) * cell + cell - 5
          << "\" font-size=\"10\">head " << h << "</text>\n";
    }
    for (size_t s = 0; s < n_src && s < trace.src_tokens.size(); ++s) {
      svg << "  <text x=\"" << label_w + static_cast<int>(s) * cell + 2
          << "\" y=\"" << label_h - 6 << "\" font-size=\"9\">" << xml_escape(trace.src_tokens[s])
          << "</text>\n";
    }
    svg << "</svg>\n";
  }
}

}  // namespace rsnmt
