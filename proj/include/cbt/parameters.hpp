#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cbt/attention.hpp"
#include "cbt/model_config.hpp"
#include "cbt/tensor.hpp"

namespace cbt {

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

struct FeedForwardParams {
  Tensor w1;  // d_model × d_ff
  Tensor b1;
  Tensor w2;  // d_ff × d_model
  Tensor b2;
};

struct EncoderLayerParams {
  HeadProjection self_attn;
  LayerNormParams norm_attn;
  FeedForwardParams ffn;
  LayerNormParams norm_ffn;
};

/// One decoder layer. Every tensor serves both flows.
struct DecoderLayerParams {
  HeadProjection interactive_attn;
  LayerNormParams norm_interactive;
  HeadProjection cross_attn;
  LayerNormParams norm_cross;
  FeedForwardParams ffn;
  LayerNormParams norm_ffn;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// All learned weights. There is no flow-indexed tensor: the only
/// flow-specific parameters are the two prefix rows of the token embedding.
struct ParameterSet {
  Tensor feature_w;  // feature_dim × d_model
  Tensor feature_b;
  Tensor token_embedding;  // (vocab_size + 2) × d_model
  std::vector<EncoderLayerParams> encoder;
  std::vector<DecoderLayerParams> decoder;
  Tensor output_w;  // d_model × vocab_size
  Tensor output_b;

  /// Xavier-uniform matrices, zero biases, unit layer-norm gains.
  static ParameterSet initialize(const ModelConfig& config, Rng& rng);

  /// Canonical ordered manifest used by checkpoints and optimizers.
  std::vector<NamedTensor> named() const;
  std::vector<Tensor> tensors() const;
  std::size_t count() const;

  /// Expected shapes for `config`, in manifest order.
  static std::vector<std::pair<std::string, Shape>> manifest(const ModelConfig& config);

  /// Rebuilds a set from tensors given in manifest order. Throws ShapeError
  /// naming the first tensor whose name or shape does not match `config`.
  static ParameterSet assemble(const ModelConfig& config, const std::vector<NamedTensor>& tensors);

  /// Fresh copy with independent storage.
  ParameterSet clone() const;
  void zero_grad();
};

/// Trainable parameter count of the same architecture run as a single
/// left-to-right decoder that starts from eos (no prefix embeddings).
std::size_t unidirectional_parameter_count(const ModelConfig& config);

/// Sinusoidal position table, max_positions × d_model. Never trained.
Tensor position_encoding(std::size_t max_positions, std::size_t d_model);

}  // namespace cbt
