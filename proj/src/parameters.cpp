#include "cbt/parameters.hpp"

#include <cmath>

namespace cbt {

namespace {

template <typename PS, typename F>
void visit(PS& ps, F&& f) {
  f("feature.w", ps.feature_w);
  f("feature.b", ps.feature_b);
  f("embedding.tokens", ps.token_embedding);
  auto attn = [&](const std::string& prefix, auto& h) {
    f(prefix + ".w_q", h.w_q);
    f(prefix + ".w_k", h.w_k);
    f(prefix + ".w_v", h.w_v);
    f(prefix + ".w_o", h.w_o);
  };
  auto norm = [&](const std::string& prefix, auto& n) {
    f(prefix + ".gain", n.gain);
    f(prefix + ".bias", n.bias);
  };
  auto ffn = [&](const std::string& prefix, auto& p) {
    f(prefix + ".w1", p.w1);
    f(prefix + ".b1", p.b1);
    f(prefix + ".w2", p.w2);
    f(prefix + ".b2", p.b2);
  };
  for (std::size_t i = 0; i < ps.encoder.size(); ++i) {
    const std::string p = "encoder." + std::to_string(i);
    auto& l = ps.encoder[i];
    attn(p + ".self_attn", l.self_attn);
    norm(p + ".norm_attn", l.norm_attn);
    ffn(p + ".ffn", l.ffn);
    norm(p + ".norm_ffn", l.norm_ffn);
  }
  for (std::size_t i = 0; i < ps.decoder.size(); ++i) {
    const std::string p = "decoder." + std::to_string(i);
    auto& l = ps.decoder[i];
    attn(p + ".interactive_attn", l.interactive_attn);
    norm(p + ".norm_interactive", l.norm_interactive);
    attn(p + ".cross_attn", l.cross_attn);
    norm(p + ".norm_cross", l.norm_cross);
    ffn(p + ".ffn", l.ffn);
    norm(p + ".norm_ffn", l.norm_ffn);
  }
  f("output.w", ps.output_w);
  f("output.b", ps.output_b);
}

// A ParameterSet whose tensors are unset but whose layer vectors and head
// counts match `config`.
ParameterSet skeleton(const ModelConfig& config) {
  ParameterSet ps;
  ps.encoder.resize(config.layers);
  ps.decoder.resize(config.layers);
  for (auto& l : ps.encoder) l.self_attn.heads = config.heads;
  for (auto& l : ps.decoder) {
    l.interactive_attn.heads = config.heads;
    l.cross_attn.heads = config.heads;
  }
  return ps;
}

Shape expected_shape(const std::string& name, const ModelConfig& c) {
  auto ends = [&](const char* s) {
    const std::string suf(s);
    return name.size() >= suf.size() && name.compare(name.size() - suf.size(), suf.size(), suf) == 0;
  };
  const std::size_t hk = c.heads * c.d_k, hv = c.heads * c.d_v;
  if (name == "feature.w") return {c.feature_dim, c.d_model};
  if (name == "feature.b") return {c.d_model};
  if (name == "embedding.tokens") return {c.embedding_rows(), c.d_model};
  if (name == "output.w") return {c.d_model, c.vocab_size};
  if (name == "output.b") return {c.vocab_size};
  if (ends(".w_q") || ends(".w_k")) return {c.d_model, hk};
  if (ends(".w_v")) return {c.d_model, hv};
  if (ends(".w_o")) return {hv, c.d_model};
  if (ends(".gain") || ends(".bias")) return {c.d_model};
  if (ends(".w1")) return {c.d_model, c.d_ff};
  if (ends(".b1")) return {c.d_ff};
  if (ends(".w2")) return {c.d_ff, c.d_model};
  if (ends(".b2")) return {c.d_model};
  throw ContractError("unknown parameter name " + name);
}

}  // namespace

std::vector<std::pair<std::string, Shape>> ParameterSet::manifest(const ModelConfig& config) {
  ParameterSet ps = skeleton(config);
  std::vector<std::pair<std::string, Shape>> out;
  visit(ps, [&](const std::string& name, Tensor&) { out.emplace_back(name, expected_shape(name, config)); });
  return out;
}

ParameterSet ParameterSet::initialize(const ModelConfig& config, Rng& rng) {
  config.validate();
  ParameterSet ps = skeleton(config);
  visit(ps, [&](const std::string& name, Tensor& t) {
    const Shape shape = expected_shape(name, config);
    std::vector<double> v(shape_numel(shape), 0.0);
    const bool is_gain = name.size() > 5 && name.compare(name.size() - 5, 5, ".gain") == 0;
    if (shape.size() == 2) {
      const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (double& x : v) x = u(rng);
    } else if (is_gain) {
      std::fill(v.begin(), v.end(), 1.0);
    }
    t = Tensor::from_values(shape, std::move(v), true);
  });
  return ps;
}

ParameterSet ParameterSet::assemble(const ModelConfig& config, const std::vector<NamedTensor>& tensors) {
  ParameterSet ps = skeleton(config);
  std::size_t i = 0;
  visit(ps, [&](const std::string& name, Tensor& t) {
    if (i >= tensors.size()) throw ShapeError("missing tensor " + name);
    const NamedTensor& nt = tensors[i++];
    if (nt.name != name) throw ShapeError("expected tensor " + name + ", found " + nt.name);
    const Shape shape = expected_shape(name, config);
    if (nt.tensor.shape() != shape) {
      throw ShapeError("tensor " + name + " has shape " + shape_string(nt.tensor.shape()) + ", expected " +
                       shape_string(shape));
    }
    t = nt.tensor;
  });
  if (i != tensors.size()) throw ShapeError("unexpected extra tensor " + tensors[i].name);
  return ps;
}

std::vector<NamedTensor> ParameterSet::named() const {
  std::vector<NamedTensor> out;
  visit(*this, [&](const std::string& name, const Tensor& t) { out.push_back({name, t}); });
  return out;
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  visit(*this, [&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

std::size_t ParameterSet::count() const {
  std::size_t n = 0;
  visit(*this, [&](const std::string&, const Tensor& t) { n += t.numel(); });
  return n;
}

ParameterSet ParameterSet::clone() const {
  ParameterSet ps = *this;
  visit(ps, [](const std::string&, Tensor& t) { t = t.clone(true); });
  return ps;
}

void ParameterSet::zero_grad() {
  visit(*this, [](const std::string&, Tensor& t) { t.zero_grad(); });
}

std::size_t unidirectional_parameter_count(const ModelConfig& config) {
  std::size_t n = 0;
  for (const auto& [name, shape] : ParameterSet::manifest(config)) {
    if (name == "embedding.tokens") {
      n += config.vocab_size * config.d_model;
    } else {
      n += shape_numel(shape);
    }
  }
  return n;
}

Tensor position_encoding(std::size_t max_positions, std::size_t d_model) {
  std::vector<double> v(max_positions * d_model);
  for (std::size_t pos = 0; pos < max_positions; ++pos) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double rate = std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model));
      const double angle = static_cast<double>(pos) / rate;
      v[pos * d_model + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from_values({max_positions, d_model}, std::move(v));
}

}  // namespace cbt
