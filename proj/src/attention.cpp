#include "cbt/attention.hpp"

#include <cmath>

#include "cbt/ops.hpp"

namespace cbt {

AttentionMask AttentionMask::causal(std::size_t length) { return causal(length, length, length); }

AttentionMask AttentionMask::causal(std::size_t queries, std::size_t keys, std::size_t valid_keys) {
  std::vector<double> m(queries * keys, 0.0);
  for (std::size_t i = 0; i < queries; ++i) {
    for (std::size_t j = 0; j < keys; ++j) {
      if (j > i || j >= valid_keys) m[i * keys + j] = kMaskedScore;
    }
  }
  AttentionMask mask;
  mask.kind_ = MaskKind::kCausal;
  mask.additive_ = Tensor::from_values({queries, keys}, std::move(m));
  return mask;
}

bool AttentionMask::allows(std::size_t query, std::size_t key) const {
  if (kind_ == MaskKind::kNone) return true;
  return additive_.at(query, key) == 0.0;
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw std::invalid_argument("unknown activation '" + name + "' (expected relu or tanh)");
}

std::string to_string(Activation af) { return af == Activation::kRelu ? "relu" : "tanh"; }

Tensor apply(Activation af, const Tensor& x) { return af == Activation::kRelu ? relu(x) : cbt::tanh(x); }

void HeadProjection::validate() const {
  if (heads == 0) throw ShapeError("attention needs at least one head");
  auto bad = [&](const std::string& why) {
    throw ShapeError("head projection " + why + ": W_Q " + shape_string(w_q.shape()) + ", W_K " +
                     shape_string(w_k.shape()) + ", W_V " + shape_string(w_v.shape()) + ", W_O " +
                     shape_string(w_o.shape()) + ", heads " + std::to_string(heads));
  };
  if (w_q.rank() != 2 || w_k.rank() != 2 || w_v.rank() != 2 || w_o.rank() != 2) bad("must be matrices");
  if (w_q.shape() != w_k.shape()) bad("W_Q and W_K differ");
  if (w_v.dim(0) != w_q.dim(0)) bad("input widths differ");
  if (w_q.dim(1) % heads != 0 || w_v.dim(1) % heads != 0) bad("columns not divisible by heads");
  if (w_o.dim(0) != w_v.dim(1) || w_o.dim(1) != w_q.dim(0)) bad("output projection does not match heads");
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask& mask,
                            const DropoutSpec& dropout) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw ShapeError("attention needs matrices: Q " + shape_string(q.shape()) + ", K " + shape_string(k.shape()) +
                     ", V " + shape_string(v.shape()));
  }
  if (q.dim(1) != k.dim(1)) {
    throw ShapeError("attention d_k mismatch: Q " + shape_string(q.shape()) + ", K " + shape_string(k.shape()));
  }
  if (k.dim(0) != v.dim(0)) {
    throw ShapeError("attention key/value count mismatch: K " + shape_string(k.shape()) + ", V " +
                     shape_string(v.shape()));
  }
  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(q.dim(1))));
  if (!mask.empty()) {
    const Tensor& m = mask.additive();
    if (m.shape() != scores.shape()) {
      throw ShapeError("mask " + shape_string(m.shape()) + " does not match scores " + shape_string(scores.shape()));
    }
    const std::size_t cols = m.dim(1);
    for (std::size_t i = 0; i < m.dim(0); ++i) {
      bool any = false;
      for (std::size_t j = 0; j < cols && !any; ++j) any = m[i * cols + j] == 0.0;
      if (!any) throw ContractError("attention mask blocks every key for query row " + std::to_string(i));
    }
    scores = add(scores, m);
  }
  Tensor weights = dropout.training ? cbt::dropout(softmax(scores), dropout.p, true, dropout.rng) : softmax(scores);
  return matmul(weights, v);
}

namespace {

std::vector<Tensor> head_outputs(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                                 const AttentionMask& mask, const DropoutSpec& dropout) {
  const std::size_t dk = q.dim(1) / heads, dv = v.dim(1) / heads;
  std::vector<Tensor> out;
  out.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    out.push_back(scaled_dot_attention(slice_cols(q, i * dk, dk), slice_cols(k, i * dk, dk),
                                       slice_cols(v, i * dv, dv), mask, dropout));
  }
  return out;
}

}  // namespace

Tensor multi_head(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in, const AttentionMask& mask,
                  const HeadProjection& proj, const DropoutSpec& dropout) {
  proj.validate();
  const std::size_t d = proj.d_model();
  for (const Tensor* t : {&q_in, &k_in, &v_in}) {
    if (t->rank() != 2 || t->dim(1) != d) {
      throw ShapeError("multi-head input " + shape_string(t->shape()) + " does not have width d_model=" +
                       std::to_string(d));
    }
  }
  auto heads = head_outputs(matmul(q_in, proj.w_q), matmul(k_in, proj.w_k), matmul(v_in, proj.w_v), proj.heads,
                            mask, dropout);
  return matmul(concat_cols(heads), proj.w_o);
}

InteractiveMasks InteractiveMasks::causal(std::size_t length) { return causal(length, length, length); }

InteractiveMasks InteractiveMasks::causal(std::size_t length, std::size_t fwd_valid, std::size_t bwd_valid) {
  InteractiveMasks m;
  m.fwd_self = AttentionMask::causal(length);
  m.bwd_self = m.fwd_self;
  m.fwd_cross = AttentionMask::causal(length, length, bwd_valid);
  m.bwd_cross = AttentionMask::causal(length, length, fwd_valid);
  return m;
}

Tensor interactive_heads(const Tensor& q, const Tensor& own_k, const Tensor& own_v, const Tensor& other_k,
                         const Tensor& other_v, std::size_t heads, double lambda, Activation af,
                         const AttentionMask& own_mask, const AttentionMask& cross_mask, const DropoutSpec& dropout) {
  if (lambda < 0.0) throw ContractError("lambda must be non-negative");
  auto past = head_outputs(q, own_k, own_v, heads, own_mask, dropout);
  auto future = head_outputs(q, other_k, other_v, heads, cross_mask, dropout);
  std::vector<Tensor> fused;
  fused.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) fused.push_back(add(past[i], scale(apply(af, future[i]), lambda)));
  return concat_cols(fused);
}

FlowPair bidir_interactive_attention(const Tensor& x_fwd, const Tensor& x_bwd, const HeadProjection& proj,
                                     double lambda, Activation af, const InteractiveMasks& masks,
                                     const DropoutSpec& dropout) {
  proj.validate();
  if (x_fwd.shape() != x_bwd.shape()) {
    throw ContractError("flow shapes differ: " + shape_string(x_fwd.shape()) + " vs " + shape_string(x_bwd.shape()));
  }
  if (x_fwd.rank() != 2 || x_fwd.dim(1) != proj.d_model()) {
    throw ShapeError("interactive attention input " + shape_string(x_fwd.shape()) + " does not have width d_model=" +
                     std::to_string(proj.d_model()));
  }
  const Tensor qf = matmul(x_fwd, proj.w_q), kf = matmul(x_fwd, proj.w_k), vf = matmul(x_fwd, proj.w_v);
  const Tensor qb = matmul(x_bwd, proj.w_q), kb = matmul(x_bwd, proj.w_k), vb = matmul(x_bwd, proj.w_v);
  Tensor hf = interactive_heads(qf, kf, vf, kb, vb, proj.heads, lambda, af, masks.fwd_self, masks.fwd_cross, dropout);
  Tensor hb = interactive_heads(qb, kb, vb, kf, vf, proj.heads, lambda, af, masks.bwd_self, masks.bwd_cross, dropout);
  return {matmul(hf, proj.w_o), matmul(hb, proj.w_o)};
}

FlowPair bidir_interactive_attention(const Tensor& x_fwd, const Tensor& x_bwd, const HeadProjection& proj,
                                     double lambda, Activation af) {
  return bidir_interactive_attention(x_fwd, x_bwd, proj, lambda, af, InteractiveMasks::causal(x_fwd.dim(0)));
}

}  // namespace cbt
