#include "cbt/losses.hpp"

#include "cbt/model_config.hpp"

namespace cbt {

FlowSelection parse_flow_selection(const std::string& name) {
  if (name == "both") return FlowSelection::kBoth;
  if (name == "l2r") return FlowSelection::kL2R;
  if (name == "r2l") return FlowSelection::kR2L;
  throw ConfigError("unknown flow selection '" + name + "' (expected both, l2r or r2l)");
}

std::string to_string(FlowSelection f) {
  switch (f) {
    case FlowSelection::kL2R:
      return "l2r";
    case FlowSelection::kR2L:
      return "r2l";
    default:
      return "both";
  }
}

XeTerms xe_terms(const DecoderLogits& logits, const BiCaptionPair& pair) {
  const std::size_t T = pair.length();
  for (const Tensor* t : {&logits.fwd, &logits.bwd}) {
    if (!t->defined() || t->rank() != 2 || t->dim(0) != T) {
      throw ContractError("logits " + (t->defined() ? shape_string(t->shape()) : std::string("(none)")) +
                          " do not align with " + std::to_string(T) + " targets");
    }
  }
  if (pair.fwd_target.size() != T || pair.bwd_target.size() != T) {
    throw ContractError("target lengths differ from the pair length");
  }
  XeTerms x;
  x.fwd = log_softmax_nll(logits.fwd, pair.fwd_target, kPadId, Reduction::kSum);
  x.bwd = log_softmax_nll(logits.bwd, pair.bwd_target, kPadId, Reduction::kSum);
  for (int id : pair.fwd_target) x.fwd_tokens += id != kPadId;
  for (int id : pair.bwd_target) x.bwd_tokens += id != kPadId;
  return x;
}

Tensor joint_xe_loss(const DecoderLogits& logits, const BiCaptionPair& pair, Reduction reduction,
                     FlowSelection flows) {
  XeTerms x = xe_terms(logits, pair);
  Tensor total;
  std::size_t tokens = 0;
  switch (flows) {
    case FlowSelection::kL2R:
      total = x.fwd;
      tokens = x.fwd_tokens;
      break;
    case FlowSelection::kR2L:
      total = x.bwd;
      tokens = x.bwd_tokens;
      break;
    default:
      total = add(x.fwd, x.bwd);
      tokens = x.fwd_tokens + x.bwd_tokens;
  }
  if (reduction == Reduction::kSum || tokens == 0) return total;
  return scale(total, 1.0 / static_cast<double>(tokens));
}

}  // namespace cbt
