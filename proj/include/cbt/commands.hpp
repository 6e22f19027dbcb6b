#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "cbt/autodiff.hpp"
#include "cbt/evaluate.hpp"
#include "cbt/run_config.hpp"
#include "cbt/scst.hpp"
#include "cbt/synth.hpp"
#include "cbt/vocabulary.hpp"
#include "cbt/xe_trainer.hpp"

namespace cbt {

/// Run directory layout:
///
///   <run_dir>/config/<command>.cfg     effective configuration of each command
///   <run_dir>/data/{train,val,test}.jsonl
///   <run_dir>/vocab.json
///   <run_dir>/checkpoints/{xe,sc}_{best,last}.ckpt, {xe,sc}_last.state
///   <run_dir>/logs/{xe,sc}.jsonl        one line per epoch
///   <run_dir>/decode/<split>.jsonl
///   <run_dir>/ablate/<lambda>_<af>/...  one sub-run per ablation cell
///
/// Every command validates the whole configuration before touching disk.
/// ConfigError means invalid configuration; other exceptions are runtime
/// failures.
namespace run_layout {
std::filesystem::path data(const RunConfig& run, const std::string& split);
std::filesystem::path vocab(const RunConfig& run);
std::filesystem::path checkpoints(const RunConfig& run);
std::filesystem::path logs(const RunConfig& run);
std::filesystem::path decode_output(const RunConfig& run);
}  // namespace run_layout

SynthCorpus cmd_synth(const RunConfig& run, std::ostream& out);
Vocabulary cmd_vocab(const RunConfig& run, std::ostream& out);
XeHistory cmd_train_xe(const RunConfig& run, std::ostream& out);
ScHistory cmd_train_sc(const RunConfig& run, std::ostream& out);

struct DecodeOutcome {
  std::vector<DecodedImage> decoded;
  EvalReport report;
  std::filesystem::path output;
};

DecodeOutcome cmd_decode(const RunConfig& run, std::ostream& out);
EvalReport cmd_score(const RunConfig& run, std::ostream& out);

struct GradcheckOutcome {
  std::vector<std::pair<std::string, GradCheckReport>> cases;
  bool passed = false;
};

/// Joint-XE gradient of a d_model=8, one-layer, two-head, V=11, T=4 model
/// against central differences in float64, for each activation.
GradcheckOutcome cmd_gradcheck(const RunConfig& run, std::ostream& out);

/// Finite-difference check of one tiny full-model instance.
GradCheckReport gradcheck_instance(double lambda, Activation af, std::uint64_t seed, double tolerance);

struct AblationRow {
  double lambda = 0.0;
  Activation af = Activation::kRelu;
  EvalReport report;
};

std::vector<AblationRow> cmd_ablate(const RunConfig& run, std::ostream& out);

/// Seeded stream for one purpose, so stages do not share random draws.
Rng stage_rng(const RunConfig& run, std::uint64_t stage);

}  // namespace cbt
