#pragma once

#include <vector>

#include "cbt/captions.hpp"

namespace cbt {

struct BleuResult {
  std::vector<double> bleu;  // bleu[n-1] = BLEU-n
  double brevity_penalty = 0.0;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;
};

/// Corpus BLEU: clipped n-gram counts and totals summed over the corpus,
/// geometric mean of precisions 1..n, brevity penalty against the closest
/// reference length (shorter wins ties). No smoothing, so any zero precision
/// gives BLEU-n = 0.
BleuResult bleu(const std::vector<IdSeq>& candidates, const std::vector<std::vector<IdSeq>>& references,
                std::size_t max_n = 4);

BleuResult bleu(const std::vector<TokenSeq>& candidates, const std::vector<std::vector<TokenSeq>>& references,
                std::size_t max_n = 4);

}  // namespace cbt
