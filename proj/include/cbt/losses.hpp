#pragma once

#include <cstddef>

#include "cbt/captions.hpp"
#include "cbt/ops.hpp"
#include "cbt/transformer.hpp"

namespace cbt {

enum class FlowSelection { kBoth, kL2R, kR2L };

FlowSelection parse_flow_selection(const std::string& name);
std::string to_string(FlowSelection f);

struct XeTerms {
  Tensor fwd;  // summed NLL over the non-pad fwd targets
  Tensor bwd;
  std::size_t fwd_tokens = 0;
  std::size_t bwd_tokens = 0;
};

/// Per-flow summed negative log-likelihoods; throws ContractError when the
/// logit rows do not match the pair length.
XeTerms xe_terms(const DecoderLogits& logits, const BiCaptionPair& pair);

/// Joint XE over both flows. kSum is the plain sum of per-token NLLs; kMean
/// divides it by the number of non-pad targets in both flows.
Tensor joint_xe_loss(const DecoderLogits& logits, const BiCaptionPair& pair, Reduction reduction = Reduction::kMean,
                     FlowSelection flows = FlowSelection::kBoth);

}  // namespace cbt
