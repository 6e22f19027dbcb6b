#include "cbt/bleu.hpp"

#include <cmath>
#include <cstdlib>

#include "cbt/detail/ngrams.hpp"

namespace cbt {

BleuResult bleu(const std::vector<IdSeq>& candidates, const std::vector<std::vector<IdSeq>>& references,
                std::size_t max_n) {
  if (candidates.size() != references.size()) {
    throw ContractError("BLEU got " + std::to_string(candidates.size()) + " candidates for " +
                        std::to_string(references.size()) + " reference sets");
  }
  if (max_n == 0 || max_n > 4) throw ContractError("BLEU order must be in [1, 4]");
  std::vector<double> matched(max_n, 0.0), total(max_n, 0.0);
  BleuResult r;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const IdSeq& c = candidates[i];
    const auto& refs = references[i];
    if (refs.empty()) throw ContractError("image " + std::to_string(i) + " has no references");
    r.hypothesis_length += c.size();
    std::size_t best = refs[0].size();
    for (const auto& ref : refs) {
      const auto d = std::labs(static_cast<long>(ref.size()) - static_cast<long>(c.size()));
      const auto bd = std::labs(static_cast<long>(best) - static_cast<long>(c.size()));
      if (d < bd || (d == bd && ref.size() < best)) best = ref.size();
    }
    r.reference_length += best;
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto cand = detail::ngram_counts(c, n);
      std::unordered_map<std::uint64_t, double> clip;
      for (const auto& ref : refs) {
        for (const auto& [k, v] : detail::ngram_counts(ref, n)) clip[k] = std::max(clip[k], v);
      }
      for (const auto& [k, v] : cand) {
        auto it = clip.find(k);
        matched[n - 1] += std::min(v, it == clip.end() ? 0.0 : it->second);
        total[n - 1] += v;
      }
    }
  }
  const double hyp = static_cast<double>(r.hypothesis_length), ref = static_cast<double>(r.reference_length);
  r.brevity_penalty = hyp == 0.0 ? 0.0 : (hyp > ref ? 1.0 : std::exp(1.0 - ref / hyp));
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (matched[n - 1] == 0.0 || total[n - 1] == 0.0) zero = true;
    if (!zero) log_sum += std::log(matched[n - 1] / total[n - 1]);
    r.bleu.push_back(zero ? 0.0 : r.brevity_penalty * std::exp(log_sum / static_cast<double>(n)));
  }
  return r;
}

BleuResult bleu(const std::vector<TokenSeq>& candidates, const std::vector<std::vector<TokenSeq>>& references,
                std::size_t max_n) {
  auto c = detail::intern(candidates, references);
  return bleu(c.candidates, c.references, max_n);
}

}  // namespace cbt
