#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbt/model_config.hpp"
#include "cbt/parameters.hpp"

namespace cbt {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint layout (all integers little-endian):
///
///   "CBTK1"                       5-byte magic/version
///   u64 header_length
///   header_length bytes of JSON   {"config": {...}, "tensors": [{"name", "shape", "count"}, ...]}
///   float32 values                tensors concatenated in manifest order
///
/// The reader checks the magic, parses the header, validates every entry
/// against the config-derived manifest, and requires the file size to equal
/// header end + 4 * total count.
inline constexpr char kCheckpointMagic[] = "CBTK1";

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const ParameterSet& params, const ModelConfig& config, const std::filesystem::path& path);

struct LoadedCheckpoint {
  ParameterSet params;
  ModelConfig config;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Generic named-tensor container in the same format, used for optimizer
/// state. `extra` is stored in the header alongside the manifest.
void save_tensor_file(const std::vector<NamedTensor>& tensors, const nlohmann::json& extra,
                      const std::filesystem::path& path);

struct TensorFile {
  std::vector<NamedTensor> tensors;
  nlohmann::json extra;
};

TensorFile load_tensor_file(const std::filesystem::path& path);

/// Writes `contents` to a temporary sibling of `path` and renames it.
void write_file_atomically(const std::filesystem::path& path, const std::string& contents);

}  // namespace cbt
