#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rsnmt/common.hpp"
#include "rsnmt/model.hpp"

namespace rsnmt {

// Corpus BLEU: geometric mean of clipped n-gram precisions (orders 1..4,
// uniform weights) times brevity penalty, scaled to 0..100. No smoothing; a
// zero precision gives BLEU 0.
struct EvalReport {
  double bleu = 0.0;
  std::array<double, 4> precisions{};
  double brevity_penalty = 0.0;
  int64_t hyp_length = 0;
  int64_t ref_length = 0;
};

EvalReport corpus_bleu(const std::vector<std::vector<std::string>>& hyps,
                       const std::vector<std::vector<std::string>>& refs, int max_order = 4,
                       bool lowercase = true);

// Whitespace-tokenizes each line first.
EvalReport corpus_bleu_lines(const std::vector<std::string>& hyps,
                             const std::vector<std::string>& refs, int max_order = 4,
                             bool lowercase = true);

// Paired bootstrap: resample sentence indices with replacement and count how
// often each system's BLEU wins; exact ties split evenly. The loser is
// significant(ly worse) when its win fraction is below p.
struct SignificanceResult {
  char better = 'T';  // 'A', 'B', or 'T' for tie
  double p_value = 0.5;
  double win_fraction_a = 0.5;
};

SignificanceResult bootstrap_significance(const std::vector<std::string>& hyp_a,
                                          const std::vector<std::string>& hyp_b,
                                          const std::vector<std::string>& refs,
                                          int resamples = 1000, double p = 0.05,
                                          uint64_t seed = 1);

// Shannon entropy -sum p ln p with 0 ln 0 := 0. The row must sum to 1 within
// 1e-6 with non-negative entries.
double attention_entropy(std::span<const double> row);

struct AttentionStats {
  // Mean row entropy per (layer application, head).
  std::vector<std::vector<double>> entropy;
  // Mean L1 distance between each layer's rows and the previous layer's,
  // per head; shows whether attention settles with depth.
  std::vector<std::vector<double>> l1_from_previous;
};

AttentionStats compute_attention_stats(const AttentionTrace& trace);

// Writes <stem>.json plus one grayscale SVG heatmap per layer under dir.
// The JSON holds every attention row exactly; each SVG shows heads x source
// cells (rows averaged over target positions), darker meaning more weight.
void export_attention(const AttentionTrace& trace, const AttentionStats& stats,
                      const std::string& dir, const std::string& stem);

}  // namespace rsnmt
