#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <algorithm>
#include <vector>

#include "cbt/captions.hpp"
#include "cbt/model_config.hpp"
#include "cbt/parameters.hpp"
#include "cbt/tensor.hpp"
#include "cbt/tokens.hpp"

namespace cbt::testing {

struct TinyModel {
  ModelConfig config;
  ParameterSet params;
};

inline ModelConfig tiny_config(std::size_t vocab_size, double lambda, Activation af = Activation::kRelu,
                               std::size_t layers = 1, std::size_t d_model = 8, std::size_t heads = 2) {
  ModelConfig c;
  c.d_model = d_model;
  c.heads = heads;
  c.d_k = d_model / heads;
  c.d_v = d_model / heads;
  c.d_ff = 2 * d_model;
  c.layers = layers;
  c.dropout = 0.0;
  c.lambda = lambda;
  c.af = af;
  c.max_len = 8;
  c.feature_dim = 6;
  c.vocab_size = vocab_size;
  return c;
}

// Xavier weights plus random biases and gains, so no term of the model is
// trivially zero or one.
inline TinyModel tiny_model(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  TinyModel m{config, ParameterSet::initialize(config, rng)};
  std::normal_distribution<double> g(0.0, 0.2);
  for (auto& nt : m.params.named()) {
    if (nt.tensor.rank() != 1) continue;
    for (double& v : nt.tensor.mutable_values()) v = round_to_precision(v + g(rng));
  }
  return m;
}

inline Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = g(rng);
  return Tensor::from_values({rows, cols}, std::move(v));
}

// Content words in [kFirstWordId, vocab_size) followed by eos.
inline IdSeq random_target(std::size_t words, std::size_t vocab_size, Rng& rng) {
  std::uniform_int_distribution<int> w(kFirstWordId, static_cast<int>(vocab_size) - 1);
  IdSeq s;
  for (std::size_t i = 0; i < words; ++i) s.push_back(w(rng));
  s.push_back(kEosId);
  return s;
}

inline BiCaptionPair random_pair(std::size_t vocab_size, std::size_t max_words, Rng& rng) {
  std::uniform_int_distribution<std::size_t> len(1, max_words);
  return make_pair_from_targets(random_target(len(rng), vocab_size, rng), random_target(len(rng), vocab_size, rng),
                                vocab_size);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline bool bit_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

}  // namespace cbt::testing
