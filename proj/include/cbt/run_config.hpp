#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cbt/model_config.hpp"
#include "cbt/search.hpp"
#include "cbt/synth.hpp"
#include "cbt/xe_trainer.hpp"

namespace cbt {

/// Flat `key = value` configuration shared by every subcommand.
///
/// Lines starting with '#' and blank lines are ignored. Every key has a
/// default (the paper's setting where it gives one); unknown keys are
/// rejected with ConfigError.
class RunConfig {
 public:
  struct Key {
    std::string name;
    std::string default_value;
    std::string help;
  };

  static const std::vector<Key>& keys();

  RunConfig();

  /// Defaults overlaid with the file's entries.
  static RunConfig from_file(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  std::size_t get_size(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;  // comma-separated, empty entries dropped

  std::filesystem::path run_dir() const { return get("run_dir"); }

  /// Every key in table order as `key = value` lines.
  std::string dump() const;

  /// Builds every typed view once so bad values fail before side effects.
  void validate() const;

 private:
  std::map<std::string, std::string> values_;
};

ModelConfig model_config(const RunConfig& run, std::size_t vocab_size, std::size_t feature_dim);
TrainConfig train_config(const RunConfig& run);
DecodeConfig decode_config(const RunConfig& run);
SynthSpec synth_spec(const RunConfig& run);

}  // namespace cbt
