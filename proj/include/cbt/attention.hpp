#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cbt/tensor.hpp"

namespace cbt {

/// Additive score for a blocked (query, key) pair. Large and finite so that
/// softmax never sees an infinity.
inline constexpr double kMaskedScore = -1e9;

enum class MaskKind { kNone, kCausal };

/// Additive attention mask (0 allowed, kMaskedScore blocked), query_len × key_len.
class AttentionMask {
 public:
  AttentionMask() = default;

  static AttentionMask none() { return {}; }

  /// Lower-triangular: query i may attend to key j iff j <= i.
  static AttentionMask causal(std::size_t length);

  /// Causal over `keys` columns, additionally blocking keys at or beyond
  /// `valid_keys` (the other sequence's padding).
  static AttentionMask causal(std::size_t queries, std::size_t keys, std::size_t valid_keys);

  MaskKind kind() const { return kind_; }
  bool empty() const { return kind_ == MaskKind::kNone; }
  const Tensor& additive() const { return additive_; }
  bool allows(std::size_t query, std::size_t key) const;

 private:
  MaskKind kind_ = MaskKind::kNone;
  Tensor additive_;
};

enum class Activation { kRelu, kTanh };

Activation parse_activation(const std::string& name);
std::string to_string(Activation af);
Tensor apply(Activation af, const Tensor& x);

/// Per-head projections stored column-blocked: head i owns columns
/// [i*d_k, (i+1)*d_k) of w_q and w_k and [i*d_v, (i+1)*d_v) of w_v.
struct HeadProjection {
  std::size_t heads = 0;
  Tensor w_q;  // d_model × heads·d_k
  Tensor w_k;  // d_model × heads·d_k
  Tensor w_v;  // d_model × heads·d_v
  Tensor w_o;  // heads·d_v × d_model

  std::size_t d_model() const { return w_q.dim(0); }
  std::size_t d_k() const { return w_q.dim(1) / heads; }
  std::size_t d_v() const { return w_v.dim(1) / heads; }

  /// Throws ShapeError if the four matrices do not fit together.
  void validate() const;
};

struct DropoutSpec {
  double p = 0.0;
  bool training = false;
  Rng* rng = nullptr;
};

/// softmax(Q·Kᵀ/√d_k + mask)·V. A query row with every key blocked is a
/// ContractError rather than a silent NaN.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask& mask = {},
                            const DropoutSpec& dropout = {});

/// Concat(H_1..H_h)·W_O with H_i = Attention(Q·W_Q_i, K·W_K_i, V·W_V_i).
Tensor multi_head(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in, const AttentionMask& mask,
                  const HeadProjection& proj, const DropoutSpec& dropout = {});

/// Masks for the two-flow interactive sublayer. Own-flow terms are causal;
/// cross-flow terms are causal and also skip the other flow's padded tail.
struct InteractiveMasks {
  AttentionMask fwd_self;
  AttentionMask bwd_self;
  AttentionMask fwd_cross;  // fwd queries over bwd keys
  AttentionMask bwd_cross;  // bwd queries over fwd keys

  static InteractiveMasks causal(std::size_t length);
  static InteractiveMasks causal(std::size_t length, std::size_t fwd_valid, std::size_t bwd_valid);
};

/// Head outputs of one flow, before W_O: per head
/// Attention(q, own_k, own_v) + lambda * af(Attention(q, other_k, other_v)).
/// Inputs are already projected (fused head columns).
Tensor interactive_heads(const Tensor& q, const Tensor& own_k, const Tensor& own_v, const Tensor& other_k,
                         const Tensor& other_v, std::size_t heads, double lambda, Activation af,
                         const AttentionMask& own_mask, const AttentionMask& cross_mask,
                         const DropoutSpec& dropout = {});

struct FlowPair {
  Tensor fwd;
  Tensor bwd;
};

/// Masked multi-head bidirectional interactive attention. Both flows share
/// `proj`; with lambda == 0 each flow reduces to masked multi-head
/// self-attention.
FlowPair bidir_interactive_attention(const Tensor& x_fwd, const Tensor& x_bwd, const HeadProjection& proj,
                                     double lambda, Activation af, const InteractiveMasks& masks,
                                     const DropoutSpec& dropout = {});

FlowPair bidir_interactive_attention(const Tensor& x_fwd, const Tensor& x_bwd, const HeadProjection& proj,
                                     double lambda, Activation af);

}  // namespace cbt
