#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cbt/model_config.hpp"
#include "cbt/optimizer.hpp"
#include "cbt/parameters.hpp"
#include "json.hpp"

namespace cbt::detail {

/// Shuffled image indices cut into batches; the last batch may be short.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t images, std::size_t batch_size, Rng& rng);

std::string rng_state(const Rng& rng);
void set_rng_state(Rng& rng, const std::string& state);

/// Overwrites `dst` values in place so optimizer handles stay valid.
void copy_values(ParameterSet& dst, const ParameterSet& src);

/// Writes <dir>/<stage>_last.ckpt and <dir>/<stage>_last.state.
void save_stage(const std::filesystem::path& dir, const std::string& stage, const ParameterSet& params,
                const ModelConfig& config, const Adam& opt, const nlohmann::json& extra);

/// Restores what save_stage wrote; false when no saved state exists.
bool load_stage(const std::filesystem::path& dir, const std::string& stage, ParameterSet& params,
                const ModelConfig& config, Adam& opt, nlohmann::json& extra);

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& lines);

IdSeq argmax_rows(const Tensor& logits);

}  // namespace cbt::detail
