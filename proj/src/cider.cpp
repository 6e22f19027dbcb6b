#include "cbt/cider.hpp"

#include <cmath>
#include <unordered_set>

#include "cbt/detail/ngrams.hpp"
#include "cbt/log.hpp"
#include "cbt/model_config.hpp"

namespace cbt {

namespace detail {

std::uint64_t ngram_key(const IdSeq& s, std::size_t begin, std::size_t n) {
  std::uint64_t key = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const int id = s[begin + k];
    if (id < 0 || id >= (1 << 16)) throw IndexError("token id " + std::to_string(id) + " too large for n-gram keys");
    key = (key << 16) | static_cast<std::uint64_t>(id);
  }
  return key;
}

std::unordered_map<std::uint64_t, double> ngram_counts(const IdSeq& s, std::size_t n) {
  std::unordered_map<std::uint64_t, double> c;
  for (std::size_t i = 0; i + n <= s.size(); ++i) c[ngram_key(s, i, n)] += 1.0;
  return c;
}

InternedCorpus intern(const std::vector<TokenSeq>& candidates, const std::vector<std::vector<TokenSeq>>& references) {
  std::unordered_map<std::string, int> ids;
  auto map = [&](const TokenSeq& s) {
    IdSeq out;
    for (const auto& t : s) out.push_back(ids.emplace(t, static_cast<int>(ids.size())).first->second);
    return out;
  };
  InternedCorpus c;
  for (const auto& refs : references) {
    c.references.emplace_back();
    for (const auto& r : refs) c.references.back().push_back(map(r));
  }
  for (const auto& s : candidates) c.candidates.push_back(map(s));
  return c;
}

}  // namespace detail

CiderVariant parse_cider_variant(const std::string& name) {
  if (name == "cider") return CiderVariant::kCider;
  if (name == "cider-d") return CiderVariant::kCiderD;
  throw ConfigError("unknown CIDEr variant '" + name + "' (expected cider or cider-d)");
}

std::string to_string(CiderVariant v) { return v == CiderVariant::kCider ? "cider" : "cider-d"; }

CiderScorer::CiderScorer(const std::vector<std::vector<IdSeq>>& references, CiderVariant variant) : variant_(variant) {
  if (references.empty()) throw ContractError("CIDEr needs a non-empty reference corpus");
  for (const auto& refs : references) {
    for (std::size_t n = 1; n <= 4; ++n) {
      std::unordered_set<std::uint64_t> seen;
      for (const auto& r : refs) {
        for (std::size_t i = 0; i + n <= r.size(); ++i) seen.insert(detail::ngram_key(r, i, n));
      }
      for (auto k : seen) df_[n - 1][k] += 1.0;
    }
  }
  log_images_ = std::log(static_cast<double>(references.size()));
  refs_.reserve(references.size());
  for (const auto& refs : references) {
    std::vector<Vec> v;
    for (const auto& r : refs) v.push_back(vectorize(r));
    refs_.push_back(std::move(v));
  }
}

CiderScorer::Vec CiderScorer::vectorize(const IdSeq& s) const {
  Vec v;
  v.length = s.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    v.w[n - 1] = detail::ngram_counts(s, n);
    double sq = 0.0;
    for (auto& [k, tf] : v.w[n - 1]) {
      auto it = df_[n - 1].find(k);
      const double df = it == df_[n - 1].end() ? 1.0 : std::max(1.0, it->second);
      tf *= log_images_ - std::log(df);
      sq += tf * tf;
    }
    v.norm[n - 1] = std::sqrt(sq);
  }
  return v;
}

double CiderScorer::similarity(const Vec& cand, const Vec& ref) const {
  constexpr double kSigma = 6.0;
  const double delta = static_cast<double>(cand.length) - static_cast<double>(ref.length);
  double total = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    double dot = 0.0;
    for (const auto& [k, w] : cand.w[n]) {
      auto it = ref.w[n].find(k);
      if (it == ref.w[n].end()) continue;
      dot += (variant_ == CiderVariant::kCiderD ? std::min(w, it->second) : w) * it->second;
    }
    if (cand.norm[n] != 0.0 && ref.norm[n] != 0.0) dot /= cand.norm[n] * ref.norm[n];
    if (variant_ == CiderVariant::kCiderD) dot *= std::exp(-(delta * delta) / (2.0 * kSigma * kSigma));
    total += dot;
  }
  return total / 4.0;
}

double CiderScorer::score(std::size_t image, const IdSeq& candidate) const {
  if (image >= refs_.size()) throw IndexError("image " + std::to_string(image) + " not in the CIDEr corpus");
  if (candidate.empty()) {
    log_warn("empty candidate caption scores 0 under CIDEr");
    return 0.0;
  }
  const Vec c = vectorize(candidate);
  const auto& refs = refs_[image];
  if (refs.empty()) return 0.0;
  double s = 0.0;
  for (const Vec& r : refs) s += similarity(c, r);
  return 10.0 * s / static_cast<double>(refs.size());
}

double CiderScorer::score(const IdSeq& candidate, const std::vector<IdSeq>& refs) const {
  if (candidate.empty()) {
    log_warn("empty candidate caption scores 0 under CIDEr");
    return 0.0;
  }
  if (refs.empty()) return 0.0;
  const Vec c = vectorize(candidate);
  double s = 0.0;
  for (const IdSeq& r : refs) s += similarity(c, vectorize(r));
  return 10.0 * s / static_cast<double>(refs.size());
}

CiderResult CiderScorer::corpus(const std::vector<IdSeq>& candidates) const {
  if (candidates.size() != refs_.size()) {
    throw ContractError("CIDEr got " + std::to_string(candidates.size()) + " candidates for " +
                        std::to_string(refs_.size()) + " images");
  }
  CiderResult r;
  r.per_image.reserve(candidates.size());
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    r.per_image.push_back(score(i, candidates[i]));
    total += r.per_image.back();
  }
  r.corpus = total / static_cast<double>(candidates.size());
  return r;
}

CiderResult cider(const std::vector<IdSeq>& candidates, const std::vector<std::vector<IdSeq>>& references,
                  CiderVariant variant) {
  return CiderScorer(references, variant).corpus(candidates);
}

CiderResult cider(const std::vector<TokenSeq>& candidates, const std::vector<std::vector<TokenSeq>>& references,
                  CiderVariant variant) {
  auto c = detail::intern(candidates, references);
  return cider(c.candidates, c.references, variant);
}

}  // namespace cbt
