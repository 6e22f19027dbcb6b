#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include "cbt/attention.hpp"
#include "json.hpp"

namespace cbt {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Architecture hyperparameters. Defaults are the base transformer sizes with
/// ReLU fusion and lambda = 0.1.
struct ModelConfig {
  std::size_t d_model = 512;
  std::size_t d_k = 64;
  std::size_t d_v = 64;
  std::size_t d_ff = 2048;
  std::size_t layers = 6;
  std::size_t heads = 8;
  double dropout = 0.1;
  double lambda = 0.1;
  Activation af = Activation::kRelu;
  std::size_t max_len = 16;  // content tokens; positions cover max_len + 2
  std::size_t feature_dim = 2048;
  std::size_t vocab_size = 0;  // output classes; embedding adds the two prefixes
  double layer_norm_eps = 1e-6;

  std::size_t max_positions() const { return max_len + 2; }
  std::size_t embedding_rows() const { return vocab_size + 2; }

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace cbt
