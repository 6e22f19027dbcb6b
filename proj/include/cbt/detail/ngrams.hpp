#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cbt/captions.hpp"

namespace cbt::detail {

/// Packs an n-gram (n <= 4) of ids below 2^16 into one key.
std::uint64_t ngram_key(const IdSeq& s, std::size_t begin, std::size_t n);

std::unordered_map<std::uint64_t, double> ngram_counts(const IdSeq& s, std::size_t n);

struct InternedCorpus {
  std::vector<IdSeq> candidates;
  std::vector<std::vector<IdSeq>> references;
};

InternedCorpus intern(const std::vector<TokenSeq>& candidates, const std::vector<std::vector<TokenSeq>>& references);

}  // namespace cbt::detail
