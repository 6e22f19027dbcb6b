#include "cbt/scst.hpp"

#include <algorithm>
#include <cmath>

#include "cbt/autodiff.hpp"
#include "cbt/checkpoint.hpp"
#include "cbt/detail/train_common.hpp"
#include "cbt/log.hpp"
#include "cbt/vocabulary.hpp"

namespace cbt {

namespace {

int draw_token(const std::vector<double>& probs, double temperature, Rng& rng) {
  if (temperature == 0.0) {
    int best = -1;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      if (static_cast<int>(k) == kPadId) continue;
      if (best < 0 || probs[k] > probs[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
    }
    return best;
  }
  std::vector<double> w(probs.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (static_cast<int>(k) == kPadId) continue;
    w[k] = temperature == 1.0 ? probs[k] : std::pow(probs[k], 1.0 / temperature);
    total += w[k];
  }
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  double acc = 0.0;
  int last = -1;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] <= 0.0) continue;
    last = static_cast<int>(k);
    acc += w[k];
    if (u < acc) return last;
  }
  return last;
}

}  // namespace

std::vector<SamplePair> sample_captions(const ParameterSet& params, const ModelConfig& config, const ContextCache& ctx,
                                        std::size_t n, std::size_t max_len, Rng& rng, double temperature) {
  if (max_len == 0 || max_len > config.max_positions()) {
    throw ConfigError("sample max_len must be in [1, " + std::to_string(config.max_positions()) + "]");
  }
  const std::size_t V = config.vocab_size;
  std::vector<SamplePair> out(n);
  for (SamplePair& s : out) {
    IncrementalState state;
    int fwd_in = l2r_id(V), bwd_in = r2l_id(V);
    bool fwd_active = true, bwd_active = true;
    while (fwd_active || bwd_active) {
      StepOutput step = decode_step(ctx, std::move(state), fwd_active ? std::optional<int>(fwd_in) : std::nullopt,
                                    bwd_active ? std::optional<int>(bwd_in) : std::nullopt, params, config);
      state = std::move(step.state);
      auto advance = [&](FlowSample& fs, const std::vector<double>& probs, int& next, bool& active) {
        const int tok = draw_token(probs, temperature, rng);
        const double lp = std::log(probs[static_cast<std::size_t>(tok)]);
        fs.tokens.push_back(tok);
        fs.logprobs.push_back(lp);
        fs.logprob += lp;
        next = tok;
        if (tok == kEosId || fs.tokens.size() >= max_len) active = false;
      };
      if (fwd_active) advance(s.fwd, step.fwd_probs, fwd_in, fwd_active);
      if (bwd_active) advance(s.bwd, step.bwd_probs, bwd_in, bwd_active);
    }
  }
  return out;
}

std::vector<double> average_of_rest_advantages(const std::vector<double>& rewards) {
  const std::size_t N = rewards.size();
  if (N < 2) throw ConfigError("the average-of-rest baseline needs at least two samples");
  std::vector<double> adv(N, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    double s = 0.0;
    for (std::size_t m = 0; m < N; ++m) {
      if (m != i) s += rewards[i] - rewards[m];
    }
    adv[i] = s / static_cast<double>(N - 1);
  }
  return adv;
}

ScstStepResult scst_step(ParameterSet& params, const ModelConfig& config, const std::vector<EncodedImage>& images,
                         const std::vector<std::size_t>& batch, const RewardFn& reward, const TrainConfig& tc,
                         Adam& opt, double lr, Rng& rng) {
  if (tc.samples < 2) throw ConfigError("self-critical training needs samples >= 2");
  if (batch.empty()) throw ContractError("empty SCST batch");
  const std::size_t N = tc.samples;
  const std::size_t V = config.vocab_size;
  const std::size_t max_len = std::min(tc.sc_max_len, config.max_positions());
  ScstStepResult res;
  std::vector<Tensor> terms;
  double reward_fwd = 0.0, reward_bwd = 0.0;
  for (std::size_t idx : batch) {
    const EncodedImage& img = images.at(idx);
    std::vector<SamplePair> samples;
    {
      NoGradScope no_grad;
      const ContextCache cache = prepare_context(encode(img.features, params, config), params, config);
      samples = sample_captions(params, config, cache, N, max_len, rng, tc.sample_temperature);
    }
    std::vector<double> rf(N), rb(N);
    for (std::size_t n = 0; n < N; ++n) {
      const IdSeq fwd = strip_special(samples[n].fwd.tokens, V);
      const IdSeq bwd = reversed(strip_special(samples[n].bwd.tokens, V));
      rf[n] = reward(idx, fwd);
      rb[n] = reward(idx, bwd);
      reward_fwd += rf[n];
      reward_bwd += rb[n];
    }
    const auto af = average_of_rest_advantages(rf);
    const auto ab = average_of_rest_advantages(rb);
    const Tensor ctx = encode(img.features, params, config);
    for (std::size_t n = 0; n < N; ++n) {
      const BiCaptionPair pair = make_pair_from_targets(samples[n].fwd.tokens, samples[n].bwd.tokens, V);
      const XeTerms x = xe_terms(decode_train(ctx, pair, params, config), pair);
      // x.fwd is -log p of the whole sample, so adv * x.fwd is -adv * log p.
      terms.push_back(scale(x.fwd, af[n]));
      terms.push_back(scale(x.bwd, ab[n]));
    }
    res.advantages_fwd.push_back(af);
    res.advantages_bwd.push_back(ab);
  }
  const double denom = static_cast<double>(N * batch.size());
  const Tensor loss = scale(add_n(terms), 1.0 / denom);
  res.loss = loss.item();
  res.reward_fwd = reward_fwd / denom;
  res.reward_bwd = reward_bwd / denom;
  if (!std::isfinite(res.loss)) throw TrainingError("non-finite SCST loss at step " + std::to_string(opt.steps() + 1));
  backward(loss);
  res.grad_norm = opt.step(lr);
  return res;
}

namespace {

nlohmann::json to_json(const ScEpoch& e) {
  return {{"stage", "sc"},
          {"epoch", e.epoch},
          {"step", e.step},
          {"loss", e.loss},
          {"reward_l2r", e.reward_fwd},
          {"reward_r2l", e.reward_bwd},
          {"val_cider", e.val.cider},
          {"val_cider_l2r", e.val.cider_l2r},
          {"val_cider_r2l", e.val.cider_r2l}};
}

ScEpoch sc_epoch_from_json(const nlohmann::json& j) {
  ScEpoch e;
  e.epoch = j.at("epoch");
  e.step = j.at("step");
  e.loss = j.at("loss");
  e.reward_fwd = j.at("reward_l2r");
  e.reward_bwd = j.at("reward_r2l");
  e.val = {j.at("val_cider"), j.at("val_cider_l2r"), j.at("val_cider_r2l")};
  return e;
}

}  // namespace

ScHistory train_sc(ParameterSet& params, const ModelConfig& config, const std::vector<EncodedImage>& train,
                   const std::vector<EncodedImage>& val, const TrainConfig& tc, Rng& rng, const TrainPaths& paths,
                   bool resume) {
  config.validate();
  tc.validate();
  if (train.empty() || val.empty()) throw ContractError("training needs non-empty train and validation splits");
  std::vector<std::vector<IdSeq>> refs;
  for (const auto& img : train) refs.push_back(img.refs);
  const CiderScorer scorer(refs, tc.reward);
  const RewardFn reward = [&](std::size_t image, const IdSeq& caption) { return scorer.score(image, caption); };

  Adam opt(params.tensors(), tc.adam);
  ScHistory hist;
  const bool checkpointing = !paths.checkpoint_dir.empty();
  bool resumed = false;
  if (resume && checkpointing) {
    nlohmann::json extra;
    if (detail::load_stage(paths.checkpoint_dir, "sc", params, config, opt, extra)) {
      for (const auto& e : extra.at("history")) hist.epochs.push_back(sc_epoch_from_json(e));
      hist.initial = {extra.at("initial_val_cider"), extra.at("initial_val_cider_l2r"),
                      extra.at("initial_val_cider_r2l")};
      hist.best_epoch = extra.at("best_epoch");
      hist.best_val_cider = extra.at("best_val_cider");
      detail::set_rng_state(rng, extra.at("rng"));
      resumed = true;
      log_info("resuming SC training after epoch " + std::to_string(hist.epochs.size()));
    }
  }
  if (!resumed) {
    hist.initial = validate_cider(params, config, val, tc);
    hist.best_val_cider = hist.initial.cider;
    hist.best_epoch = 0;
    if (checkpointing) save_checkpoint(params, config, paths.checkpoint_dir / "sc_best.ckpt");
  }
  for (std::size_t epoch = hist.epochs.size(); epoch < tc.sc_epochs; ++epoch) {
    double loss = 0.0, rf = 0.0, rb = 0.0;
    std::size_t batches = 0;
    for (const auto& batch : detail::epoch_batches(train.size(), tc.batch_size, rng)) {
      const ScstStepResult r = scst_step(params, config, train, batch, reward, tc, opt, tc.sc_lr, rng);
      loss += r.loss;
      rf += r.reward_fwd;
      rb += r.reward_bwd;
      ++batches;
    }
    ScEpoch rec;
    rec.epoch = epoch;
    rec.step = opt.steps();
    rec.loss = loss / static_cast<double>(batches);
    rec.reward_fwd = rf / static_cast<double>(batches);
    rec.reward_bwd = rb / static_cast<double>(batches);
    rec.val = validate_cider(params, config, val, tc);
    hist.epochs.push_back(rec);
    if (rec.val.cider > hist.best_val_cider) {
      hist.best_val_cider = rec.val.cider;
      hist.best_epoch = epoch + 1;
      if (checkpointing) save_checkpoint(params, config, paths.checkpoint_dir / "sc_best.ckpt");
    }
    log_info("sc epoch " + std::to_string(epoch) + " reward l2r " + std::to_string(rec.reward_fwd) + " r2l " +
             std::to_string(rec.reward_bwd) + " val CIDEr " + std::to_string(rec.val.cider));
    std::vector<nlohmann::json> lines;
    for (const auto& e : hist.epochs) lines.push_back(to_json(e));
    if (checkpointing) {
      detail::save_stage(paths.checkpoint_dir, "sc", params, config, opt,
                         {{"history", lines},
                          {"initial_val_cider", hist.initial.cider},
                          {"initial_val_cider_l2r", hist.initial.cider_l2r},
                          {"initial_val_cider_r2l", hist.initial.cider_r2l},
                          {"best_epoch", hist.best_epoch},
                          {"best_val_cider", hist.best_val_cider},
                          {"rng", detail::rng_state(rng)}});
    }
    if (!paths.log_path.empty()) detail::write_jsonl(paths.log_path, lines);
  }
  return hist;
}

}  // namespace cbt
