#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbt/tensor.hpp"
#include "cbt/tokens.hpp"

namespace cbt {

using TokenSeq = std::vector<std::string>;
using IdSeq = std::vector<int>;

inline constexpr std::size_t kMaxCaptionTokens = 16;

class PairingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One image's reference captions (whitespace tokens).
struct CaptionRecord {
  std::string image_id;
  std::vector<TokenSeq> refs;

  friend bool operator==(const CaptionRecord&, const CaptionRecord&) = default;
};

/// One image as a set of region vectors, stored as float32 row-major.
struct RegionFeatureSet {
  std::string image_id;
  std::size_t regions = 0;
  std::size_t dim = 0;
  std::vector<float> values;

  Tensor to_tensor() const;
  friend bool operator==(const RegionFeatureSet&, const RegionFeatureSet&) = default;
};

/// Teacher-forced inputs and targets for both flows, padded to one length.
///
/// fwd_input  = [<l2r>, y1 .. yn, pad ..]   fwd_target = [y1 .. yn, eos, pad ..]
/// bwd_input  = [<r2l>, reversed partner ..] bwd_target = [reversed partner .., eos, pad ..]
///
/// fwd_length/bwd_length count the non-pad targets, which is also the number
/// of meaningful input positions.
struct BiCaptionPair {
  IdSeq fwd_input;
  IdSeq fwd_target;
  IdSeq bwd_input;
  IdSeq bwd_target;
  std::size_t fwd_length = 0;
  std::size_t bwd_length = 0;

  std::size_t length() const { return fwd_input.size(); }
  friend bool operator==(const BiCaptionPair&, const BiCaptionPair&) = default;
};

/// Builds a pair from the full target sequences of each flow (already in flow
/// order, normally ending in eos). Inputs are the prefix followed by the
/// targets shifted right by one.
BiCaptionPair make_pair_from_targets(const IdSeq& fwd_targets, const IdSeq& bwd_targets, std::size_t vocab_size);

IdSeq reversed(const IdSeq& seq);

/// Clips to the first `max_tokens` tokens.
IdSeq truncate(const IdSeq& seq, std::size_t max_tokens = kMaxCaptionTokens);

/// One pair per reference as the forward side. Each backward partner is drawn
/// uniformly from the other references of the same image whose token
/// sequence differs from the forward one, then reversed. Throws PairingError
/// when fewer than two references exist or no differing partner is available.
std::vector<BiCaptionPair> make_pairs(const std::vector<IdSeq>& refs, std::size_t vocab_size, Rng& rng,
                                      std::size_t max_tokens = kMaxCaptionTokens);

/// Index of the reference chosen as backward partner for each forward
/// reference; exposed so the pairing distribution can be tested directly.
std::vector<std::size_t> draw_partners(const std::vector<IdSeq>& refs, Rng& rng,
                                       std::size_t max_tokens = kMaxCaptionTokens);

}  // namespace cbt
