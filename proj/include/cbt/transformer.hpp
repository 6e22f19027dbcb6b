#pragma once

#include <optional>
#include <vector>

#include "cbt/captions.hpp"
#include "cbt/model_config.hpp"
#include "cbt/parameters.hpp"
#include "cbt/tensor.hpp"

namespace cbt {

class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout > 0
};

/// Region features (n_regions × feature_dim) to contextual features
/// (n_regions × d_model): a linear input projection followed by the encoder
/// stack (self-attention, add & norm, FFN, add & norm per layer).
Tensor encode(const Tensor& features, const ParameterSet& params, const ModelConfig& config,
              const ForwardOptions& opts = {});

struct DecoderLogits {
  Tensor fwd;  // T × vocab_size
  Tensor bwd;
};

/// Teacher-forced pass over both flows at once.
DecoderLogits decode_train(const Tensor& ctx, const BiCaptionPair& pair, const ParameterSet& params,
                           const ModelConfig& config, const ForwardOptions& opts = {});

/// Per-layer projected keys/values of one flow for positions < length.
struct FlowCache {
  std::vector<Tensor> keys;
  std::vector<Tensor> values;
  std::size_t length = 0;
};

struct IncrementalState {
  FlowCache fwd;
  FlowCache bwd;
};

/// Cross-attention keys/values of the encoder output, one pair per layer.
struct ContextCache {
  std::vector<Tensor> keys;
  std::vector<Tensor> values;
};

ContextCache prepare_context(const Tensor& ctx, const ParameterSet& params, const ModelConfig& config);

struct StepOutput {
  IncrementalState state;
  // Empty/undefined for a flow that did not advance.
  Tensor fwd_logits;
  Tensor bwd_logits;
  std::vector<double> fwd_probs;
  std::vector<double> bwd_probs;
};

/// Advances either or both flows by one position. A flow given no token keeps
/// its cache frozen; the advancing flow still attends to it. Cross-flow
/// attention at position p sees at most positions <= p of the other flow.
/// Inference only (no dropout, no graph).
StepOutput decode_step(const ContextCache& ctx, IncrementalState state, std::optional<int> fwd_token,
                       std::optional<int> bwd_token, const ParameterSet& params, const ModelConfig& config);

/// Softmax of one logit row, computed in double.
std::vector<double> probabilities(std::span<const double> logits);

}  // namespace cbt
