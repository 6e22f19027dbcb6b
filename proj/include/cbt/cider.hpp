#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cbt/captions.hpp"

namespace cbt {

enum class CiderVariant { kCider, kCiderD };

CiderVariant parse_cider_variant(const std::string& name);
std::string to_string(CiderVariant v);

struct CiderResult {
  double corpus = 0.0;
  std::vector<double> per_image;
};

/// CIDEr with document frequencies taken from one reference corpus.
///
/// An n-gram's df is the number of images whose reference set contains it;
/// idf = ln(|I| / max(df, 1)). Term weights are raw counts times idf. Plain
/// CIDEr averages over references the mean over n = 1..4 of the tf-idf cosine,
/// times 10. CIDEr-D clips candidate weights at the reference weights and
/// multiplies each term by exp(-(len_c - len_r)^2 / (2 * 6^2)).
///
/// Token ids must lie in [0, 65536).
class CiderScorer {
 public:
  explicit CiderScorer(const std::vector<std::vector<IdSeq>>& references, CiderVariant variant = CiderVariant::kCider);

  std::size_t images() const { return refs_.size(); }
  CiderVariant variant() const { return variant_; }

  /// Score of `candidate` against the references of image `image`.
  double score(std::size_t image, const IdSeq& candidate) const;

  /// Score against arbitrary references, using this scorer's df table.
  double score(const IdSeq& candidate, const std::vector<IdSeq>& refs) const;

  /// One candidate per image, in reference order.
  CiderResult corpus(const std::vector<IdSeq>& candidates) const;

 private:
  using Counts = std::unordered_map<std::uint64_t, double>;
  struct Vec {
    Counts w[4];
    double norm[4] = {0, 0, 0, 0};
    std::size_t length = 0;
  };

  Vec vectorize(const IdSeq& s) const;
  double similarity(const Vec& cand, const Vec& ref) const;

  CiderVariant variant_;
  double log_images_ = 0.0;
  std::unordered_map<std::uint64_t, double> df_[4];
  std::vector<std::vector<Vec>> refs_;
};

CiderResult cider(const std::vector<IdSeq>& candidates, const std::vector<std::vector<IdSeq>>& references,
                  CiderVariant variant = CiderVariant::kCider);

/// String-token overload; tokens are interned first.
CiderResult cider(const std::vector<TokenSeq>& candidates, const std::vector<std::vector<TokenSeq>>& references,
                  CiderVariant variant = CiderVariant::kCider);

}  // namespace cbt
