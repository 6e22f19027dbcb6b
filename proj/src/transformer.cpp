#include "cbt/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "cbt/ops.hpp"

namespace cbt {

namespace {

const Tensor& cached_positions(std::size_t max_positions, std::size_t d_model) {
  static std::mutex mu;
  static std::map<std::tuple<std::size_t, std::size_t, Precision>, Tensor> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(max_positions, d_model, precision());
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, position_encoding(max_positions, d_model)).first;
  return it->second;
}

Tensor feed_forward(const Tensor& x, const FeedForwardParams& p) {
  return add(matmul(relu(add(matmul(x, p.w1), p.b1)), p.w2), p.b2);
}

Tensor norm(const Tensor& x, const LayerNormParams& p, double eps) { return layer_norm(x, p.gain, p.bias, eps); }

Tensor drop(const Tensor& x, const ModelConfig& c, const ForwardOptions& o) {
  return dropout(x, c.dropout, o.training, o.rng);
}

DropoutSpec attention_dropout(const ModelConfig& c, const ForwardOptions& o) { return {c.dropout, o.training, o.rng}; }

Tensor embed_tokens(const IdSeq& ids, std::size_t first_position, const ParameterSet& params,
                    const ModelConfig& config) {
  if (first_position + ids.size() > config.max_positions()) {
    throw ContractError("sequence of " + std::to_string(first_position + ids.size()) +
                        " positions exceeds the position table (" + std::to_string(config.max_positions()) + ")");
  }
  const Tensor& pe = cached_positions(config.max_positions(), config.d_model);
  Tensor e = scale(embed(params.token_embedding, ids), std::sqrt(static_cast<double>(config.d_model)));
  return add(e, slice_rows(pe, first_position, ids.size()));
}

void check_params(const ParameterSet& params, const ModelConfig& config) {
  if (params.decoder.size() != config.layers || params.encoder.size() != config.layers) {
    throw ContractError("parameter set has " + std::to_string(params.decoder.size()) + " decoder layers, config has " +
                        std::to_string(config.layers));
  }
}

Tensor output_logits(const Tensor& x, const ParameterSet& params) {
  return add(matmul(x, params.output_w), params.output_b);
}

}  // namespace

Tensor encode(const Tensor& features, const ParameterSet& params, const ModelConfig& config,
              const ForwardOptions& opts) {
  check_params(params, config);
  if (!features.defined() || features.rank() != 2 || features.dim(1) != config.feature_dim) {
    throw InputError("region features must be n_regions x " + std::to_string(config.feature_dim) + ", got " +
                     (features.defined() ? shape_string(features.shape()) : std::string("nothing")));
  }
  Tensor x = add(matmul(features, params.feature_w), params.feature_b);
  const AttentionMask none;
  for (const EncoderLayerParams& l : params.encoder) {
    Tensor a = multi_head(x, x, x, none, l.self_attn, attention_dropout(config, opts));
    x = norm(add(x, drop(a, config, opts)), l.norm_attn, config.layer_norm_eps);
    x = norm(add(x, drop(feed_forward(x, l.ffn), config, opts)), l.norm_ffn, config.layer_norm_eps);
  }
  return x;
}

DecoderLogits decode_train(const Tensor& ctx, const BiCaptionPair& pair, const ParameterSet& params,
                           const ModelConfig& config, const ForwardOptions& opts) {
  check_params(params, config);
  const std::size_t T = pair.length();
  if (T == 0 || pair.fwd_target.size() != T || pair.bwd_input.size() != T || pair.bwd_target.size() != T) {
    throw ContractError("caption pair flows must share one padded length");
  }
  if (pair.fwd_length == 0 || pair.bwd_length == 0 || pair.fwd_length > T || pair.bwd_length > T) {
    throw ContractError("caption pair lengths out of range");
  }
  Tensor xf = drop(embed_tokens(pair.fwd_input, 0, params, config), config, opts);
  Tensor xb = drop(embed_tokens(pair.bwd_input, 0, params, config), config, opts);
  const InteractiveMasks masks = InteractiveMasks::causal(T, pair.fwd_length, pair.bwd_length);
  const AttentionMask none;
  const double eps = config.layer_norm_eps;
  for (const DecoderLayerParams& l : params.decoder) {
    FlowPair h = bidir_interactive_attention(xf, xb, l.interactive_attn, config.lambda, config.af, masks,
                                             attention_dropout(config, opts));
    xf = norm(add(xf, drop(h.fwd, config, opts)), l.norm_interactive, eps);
    xb = norm(add(xb, drop(h.bwd, config, opts)), l.norm_interactive, eps);
    Tensor cf = multi_head(xf, ctx, ctx, none, l.cross_attn, attention_dropout(config, opts));
    Tensor cb = multi_head(xb, ctx, ctx, none, l.cross_attn, attention_dropout(config, opts));
    xf = norm(add(xf, drop(cf, config, opts)), l.norm_cross, eps);
    xb = norm(add(xb, drop(cb, config, opts)), l.norm_cross, eps);
    xf = norm(add(xf, drop(feed_forward(xf, l.ffn), config, opts)), l.norm_ffn, eps);
    xb = norm(add(xb, drop(feed_forward(xb, l.ffn), config, opts)), l.norm_ffn, eps);
  }
  return {output_logits(xf, params), output_logits(xb, params)};
}

ContextCache prepare_context(const Tensor& ctx, const ParameterSet& params, const ModelConfig& config) {
  check_params(params, config);
  NoGradScope no_grad;
  ContextCache cache;
  for (const DecoderLayerParams& l : params.decoder) {
    cache.keys.push_back(matmul(ctx, l.cross_attn.w_k));
    cache.values.push_back(matmul(ctx, l.cross_attn.w_v));
  }
  return cache;
}

namespace {

Tensor append_row(const Tensor& cache, const Tensor& row) {
  return cache.defined() ? concat_rows({cache, row}) : row;
}

// Cross-attention against precomputed encoder keys/values.
Tensor cross_attend(const Tensor& x, const Tensor& keys, const Tensor& values, const HeadProjection& proj) {
  const Tensor q = matmul(x, proj.w_q);
  const std::size_t dk = proj.d_k(), dv = proj.d_v();
  std::vector<Tensor> heads;
  for (std::size_t i = 0; i < proj.heads; ++i) {
    heads.push_back(scaled_dot_attention(slice_cols(q, i * dk, dk), slice_cols(keys, i * dk, dk),
                                         slice_cols(values, i * dv, dv)));
  }
  return matmul(concat_cols(heads), proj.w_o);
}

}  // namespace

StepOutput decode_step(const ContextCache& ctx, IncrementalState state, std::optional<int> fwd_token,
                       std::optional<int> bwd_token, const ParameterSet& params, const ModelConfig& config) {
  check_params(params, config);
  NoGradScope no_grad;
  const std::size_t L = config.layers;
  for (FlowCache* fc : {&state.fwd, &state.bwd}) {
    if (fc->keys.empty() && fc->length == 0) {
      fc->keys.resize(L);
      fc->values.resize(L);
    }
    if (fc->keys.size() != L || fc->values.size() != L) {
      throw ContractError("incremental state has " + std::to_string(fc->keys.size()) + " layers, config has " +
                          std::to_string(L));
    }
  }
  if (ctx.keys.size() != L) throw ContractError("context cache does not match the layer count");

  struct Active {
    FlowCache* own;
    FlowCache* other;
    std::size_t position;
    Tensor x;
  };
  std::vector<Active> active;
  if (fwd_token) active.push_back({&state.fwd, &state.bwd, state.fwd.length, {}});
  if (bwd_token) active.push_back({&state.bwd, &state.fwd, state.bwd.length, {}});
  {
    std::size_t k = 0;
    if (fwd_token) active[k++].x = embed_tokens({*fwd_token}, state.fwd.length, params, config);
    if (bwd_token) active[k++].x = embed_tokens({*bwd_token}, state.bwd.length, params, config);
  }
  const double eps = config.layer_norm_eps;
  for (std::size_t l = 0; l < L; ++l) {
    const DecoderLayerParams& p = params.decoder[l];
    const HeadProjection& proj = p.interactive_attn;
    std::vector<Tensor> queries;
    for (Active& a : active) {
      queries.push_back(matmul(a.x, proj.w_q));
      a.own->keys[l] = append_row(a.own->keys[l], matmul(a.x, proj.w_k));
      a.own->values[l] = append_row(a.own->values[l], matmul(a.x, proj.w_v));
    }
    for (std::size_t i = 0; i < active.size(); ++i) {
      Active& a = active[i];
      const FlowCache& other = *a.other;
      if (!other.keys[l].defined()) throw ContractError("the other flow has no cached positions");
      const std::size_t visible = std::min(other.keys[l].dim(0), a.position + 1);
      const Tensor other_k = slice_rows(other.keys[l], 0, visible);
      const Tensor other_v = slice_rows(other.values[l], 0, visible);
      Tensor h = interactive_heads(queries[i], a.own->keys[l], a.own->values[l], other_k, other_v, proj.heads,
                                   config.lambda, config.af, {}, {});
      a.x = norm(add(a.x, matmul(h, proj.w_o)), p.norm_interactive, eps);
    }
    for (Active& a : active) {
      a.x = norm(add(a.x, cross_attend(a.x, ctx.keys[l], ctx.values[l], p.cross_attn)), p.norm_cross, eps);
      a.x = norm(add(a.x, feed_forward(a.x, p.ffn)), p.norm_ffn, eps);
    }
  }
  StepOutput out;
  std::size_t k = 0;
  if (fwd_token) {
    out.fwd_logits = output_logits(active[k++].x, params);
    out.fwd_probs = probabilities(out.fwd_logits.values());
    ++state.fwd.length;
  }
  if (bwd_token) {
    out.bwd_logits = output_logits(active[k++].x, params);
    out.bwd_probs = probabilities(out.bwd_logits.values());
    ++state.bwd.length;
  }
  out.state = std::move(state);
  return out;
}

std::vector<double> probabilities(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

}  // namespace cbt
