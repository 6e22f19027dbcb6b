#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "cbt/xe_trainer.hpp"
#include "cbt/transformer.hpp"

namespace cbt {

struct FlowSample {
  IdSeq tokens;  // flow order; ends in eos unless cut at max_len
  std::vector<double> logprobs;
  double logprob = 0.0;
};

struct SamplePair {
  FlowSample fwd;
  FlowSample bwd;
};

/// N sample pairs from one image. Sample n of each flow attends to sample n
/// of the other flow, step by step; a finished flow stays frozen while the
/// other continues. Tokens are drawn from softmax(logits)^(1/temperature)
/// with pad excluded; temperature 0 takes the argmax. Recorded log-probs are
/// under the model itself (temperature 1). Runs without dropout or graph.
std::vector<SamplePair> sample_captions(const ParameterSet& params, const ModelConfig& config, const ContextCache& ctx,
                                        std::size_t n, std::size_t max_len, Rng& rng, double temperature = 1.0);

/// adv_n = r_n - mean_{m != n} r_m, computed as sum_{m != n}(r_n - r_m) / (N - 1)
/// so that equal rewards give exactly zero.
std::vector<double> average_of_rest_advantages(const std::vector<double>& rewards);

/// Reward of a caption (forward word order, specials stripped) for the image
/// at `image` in the training split.
using RewardFn = std::function<double(std::size_t image, const IdSeq& caption)>;

struct ScstStepResult {
  double loss = 0.0;
  double reward_fwd = 0.0;  // mean over the batch's samples
  double reward_bwd = 0.0;
  double grad_norm = 0.0;
  std::vector<std::vector<double>> advantages_fwd;  // [image][sample]
  std::vector<std::vector<double>> advantages_bwd;
};

/// One self-critical update over a batch of training images. Samples are
/// drawn in eval mode, then re-scored teacher-forced (dropout off) to build
/// loss = (1 / (N * B)) * sum over images, samples and flows of -adv * log p.
ScstStepResult scst_step(ParameterSet& params, const ModelConfig& config, const std::vector<EncodedImage>& images,
                         const std::vector<std::size_t>& batch, const RewardFn& reward, const TrainConfig& tc,
                         Adam& opt, double lr, Rng& rng);

struct ScEpoch {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double reward_fwd = 0.0;
  double reward_bwd = 0.0;
  ValScores val;
};

struct ScHistory {
  ValScores initial;  // validation scores of the starting checkpoint
  std::vector<ScEpoch> epochs;
  std::size_t best_epoch = 0;
  double best_val_cider = 0.0;
};

/// Self-critical stage at fixed sc_lr with CIDEr rewards whose document
/// frequencies come from the training references. Writes sc_best.ckpt (the
/// starting weights count as a candidate) and sc_last.* like train_xe.
ScHistory train_sc(ParameterSet& params, const ModelConfig& config, const std::vector<EncodedImage>& train,
                   const std::vector<EncodedImage>& val, const TrainConfig& tc, Rng& rng, const TrainPaths& paths = {},
                   bool resume = false);

}  // namespace cbt
