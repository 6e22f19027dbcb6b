#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cbt/cider.hpp"
#include "cbt/dataset_io.hpp"
#include "cbt/losses.hpp"
#include "cbt/model_config.hpp"
#include "cbt/optimizer.hpp"
#include "cbt/parameters.hpp"

namespace cbt {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Both training stages. A batch is `batch_size` images; every reference of
/// an image becomes one caption pair and the pairs share one encoder pass.
struct TrainConfig {
  std::size_t batch_size = 10;
  std::size_t xe_epochs = 15;
  double base_lr = 5e-4;
  std::size_t warmup_steps = 20000;
  double ss_increment = 0.05;
  std::size_t ss_every = 5;
  double ss_max = 0.25;
  Reduction xe_reduction = Reduction::kMean;
  FlowSelection xe_flows = FlowSelection::kBoth;

  std::size_t sc_epochs = 15;
  double sc_lr = 1e-5;
  std::size_t samples = 5;  // per flow and image
  std::size_t sc_max_len = kMaxCaptionTokens + 1;
  double sample_temperature = 1.0;
  CiderVariant reward = CiderVariant::kCider;

  AdamConfig adam;
  std::size_t val_images = 0;  // 0 = whole validation split
  std::size_t val_max_len = kMaxCaptionTokens + 1;

  void validate() const;
};

struct ValScores {
  double cider = 0.0;  // sentence-level ensemble of greedy outputs
  double cider_l2r = 0.0;
  double cider_r2l = 0.0;
};

struct XeEpoch {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double ss_prob = 0.0;
  ValScores val;
};

struct XeHistory {
  std::vector<XeEpoch> epochs;
  std::size_t best_epoch = 0;
  double best_val_cider = -std::numeric_limits<double>::infinity();
};

/// Output locations; an empty path disables that output. Within
/// `checkpoint_dir` the trainer writes <stage>_best.ckpt, <stage>_last.ckpt and
/// <stage>_last.state (optimizer moments, counters, RNG state, history).
struct TrainPaths {
  std::filesystem::path checkpoint_dir;
  std::filesystem::path log_path;
};

/// Greedy decoding of `val` scored by CIDEr against its own references.
ValScores validate_cider(const ParameterSet& params, const ModelConfig& config, const std::vector<EncodedImage>& val,
                         const TrainConfig& tc);

/// Teacher-forced inputs with each real (non-prefix, non-pad) input token
/// replaced by the model's previous-position prediction with probability p.
BiCaptionPair mix_inputs(const BiCaptionPair& pair, const IdSeq& fwd_pred, const IdSeq& bwd_pred, double p, Rng& rng);

/// Joint XE stage with Noam warmup, scheduled sampling and best-on-validation
/// checkpointing. With `resume`, training continues from <checkpoint_dir>/xe_last.*
/// when present. Throws TrainingError on a non-finite loss.
XeHistory train_xe(ParameterSet& params, const ModelConfig& config, const std::vector<EncodedImage>& train,
                   const std::vector<EncodedImage>& val, const TrainConfig& tc, Rng& rng, const TrainPaths& paths = {},
                   bool resume = false);

}  // namespace cbt
