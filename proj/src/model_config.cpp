#include "cbt/model_config.hpp"

namespace cbt {

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw ConfigError("model config: " + why); };
  if (d_model == 0 || d_k == 0 || d_v == 0 || d_ff == 0 || heads == 0) fail("dimensions must be positive");
  if (heads * d_v != d_model) {
    fail("heads * d_v (" + std::to_string(heads * d_v) + ") must equal d_model (" + std::to_string(d_model) + ")");
  }
  if (lambda < 0.0) fail("lambda must be >= 0");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
  if (max_len == 0) fail("max_len must be positive");
  if (feature_dim == 0) fail("feature_dim must be positive");
  if (vocab_size <= static_cast<std::size_t>(2)) fail("vocab_size must exceed the reserved ids");
  if (layer_norm_eps <= 0.0) fail("layer_norm_eps must be positive");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model}, {"d_k", c.d_k},         {"d_v", c.d_v},
          {"d_ff", c.d_ff},       {"layers", c.layers},   {"heads", c.heads},
          {"dropout", c.dropout}, {"lambda", c.lambda},   {"af", to_string(c.af)},
          {"max_len", c.max_len}, {"feature_dim", c.feature_dim}, {"vocab_size", c.vocab_size},
          {"layer_norm_eps", c.layer_norm_eps}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.d_model = j.at("d_model").get<std::size_t>();
    c.d_k = j.at("d_k").get<std::size_t>();
    c.d_v = j.at("d_v").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.lambda = j.at("lambda").get<double>();
    c.af = parse_activation(j.at("af").get<std::string>());
    c.max_len = j.at("max_len").get<std::size_t>();
    c.feature_dim = j.at("feature_dim").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace cbt
