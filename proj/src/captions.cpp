#include "cbt/captions.hpp"

#include <algorithm>

namespace cbt {

Tensor RegionFeatureSet::to_tensor() const {
  if (regions == 0 || dim == 0 || values.size() != regions * dim) {
    throw ShapeError("region feature set '" + image_id + "' has " + std::to_string(values.size()) +
                     " values for shape [" + std::to_string(regions) + ", " + std::to_string(dim) + "]");
  }
  return Tensor::from_values({regions, dim}, std::vector<double>(values.begin(), values.end()));
}

BiCaptionPair make_pair_from_targets(const IdSeq& fwd_targets, const IdSeq& bwd_targets, std::size_t vocab_size) {
  if (fwd_targets.empty() || bwd_targets.empty()) {
    throw ContractError("each flow needs at least one target token");
  }
  BiCaptionPair p;
  p.fwd_length = fwd_targets.size();
  p.bwd_length = bwd_targets.size();
  const std::size_t len = std::max(p.fwd_length, p.bwd_length);
  auto fill = [&](const IdSeq& targets, int prefix, IdSeq& input, IdSeq& target) {
    input.assign(len, kPadId);
    target.assign(len, kPadId);
    input[0] = prefix;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      target[t] = targets[t];
      if (t + 1 < targets.size()) input[t + 1] = targets[t];
    }
  };
  fill(fwd_targets, l2r_id(vocab_size), p.fwd_input, p.fwd_target);
  fill(bwd_targets, r2l_id(vocab_size), p.bwd_input, p.bwd_target);
  return p;
}

IdSeq reversed(const IdSeq& seq) { return IdSeq(seq.rbegin(), seq.rend()); }

IdSeq truncate(const IdSeq& seq, std::size_t max_tokens) {
  if (seq.size() <= max_tokens) return seq;
  return IdSeq(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(max_tokens));
}

std::vector<std::size_t> draw_partners(const std::vector<IdSeq>& refs, Rng& rng, std::size_t max_tokens) {
  if (refs.size() < 2) {
    throw PairingError("pairing needs at least two references per image, got " + std::to_string(refs.size()));
  }
  std::vector<IdSeq> clipped;
  clipped.reserve(refs.size());
  for (const IdSeq& r : refs) clipped.push_back(truncate(r, max_tokens));
  std::vector<std::size_t> partners;
  partners.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < refs.size(); ++j) {
      if (j != i && clipped[j] != clipped[i]) candidates.push_back(j);
    }
    if (candidates.empty()) {
      throw PairingError("reference " + std::to_string(i) + " has no differing partner annotation");
    }
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    partners.push_back(candidates[pick(rng)]);
  }
  return partners;
}

std::vector<BiCaptionPair> make_pairs(const std::vector<IdSeq>& refs, std::size_t vocab_size, Rng& rng,
                                      std::size_t max_tokens) {
  const auto partners = draw_partners(refs, rng, max_tokens);
  std::vector<BiCaptionPair> pairs;
  pairs.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    IdSeq fwd = truncate(refs[i], max_tokens);
    IdSeq bwd = reversed(truncate(refs[partners[i]], max_tokens));
    fwd.push_back(kEosId);
    bwd.push_back(kEosId);
    pairs.push_back(make_pair_from_targets(fwd, bwd, vocab_size));
  }
  return pairs;
}

}  // namespace cbt
