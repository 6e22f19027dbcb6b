#include "cbt/xe_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cbt/autodiff.hpp"
#include "cbt/checkpoint.hpp"
#include "cbt/detail/train_common.hpp"
#include "cbt/evaluate.hpp"
#include "cbt/log.hpp"
#include "cbt/schedule.hpp"
#include "cbt/transformer.hpp"

namespace cbt {

namespace detail {

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t images, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(images);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < images; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(images, i + batch_size)));
  }
  return out;
}

std::string rng_state(const Rng& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

void set_rng_state(Rng& rng, const std::string& state) {
  std::istringstream s(state);
  s >> rng;
  if (!s) throw CheckpointError("corrupt RNG state in training state file");
}

void copy_values(ParameterSet& dst, const ParameterSet& src) {
  auto d = dst.named();
  auto s = src.named();
  if (d.size() != s.size()) throw ContractError("parameter sets differ in size");
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i].tensor.shape() != s[i].tensor.shape()) throw ShapeError("tensor " + d[i].name + " changed shape");
    auto v = d[i].tensor.mutable_values();
    std::copy(s[i].tensor.values().begin(), s[i].tensor.values().end(), v.begin());
  }
}

void save_stage(const std::filesystem::path& dir, const std::string& stage, const ParameterSet& params,
                const ModelConfig& config, const Adam& opt, const nlohmann::json& extra) {
  nlohmann::json meta = extra;
  meta["optimizer_steps"] = opt.steps();
  save_tensor_file(opt.state(), meta, dir / (stage + "_last.state"));
  save_checkpoint(params, config, dir / (stage + "_last.ckpt"));
}

bool load_stage(const std::filesystem::path& dir, const std::string& stage, ParameterSet& params,
                const ModelConfig& config, Adam& opt, nlohmann::json& extra) {
  const auto state_path = dir / (stage + "_last.state");
  const auto ckpt_path = dir / (stage + "_last.ckpt");
  if (!std::filesystem::exists(state_path) || !std::filesystem::exists(ckpt_path)) return false;
  LoadedCheckpoint ck = load_checkpoint(ckpt_path);
  if (ck.config != config) throw CheckpointError(ckpt_path.string() + " was written with a different model config");
  TensorFile st = load_tensor_file(state_path);
  copy_values(params, ck.params);
  opt.load_state(st.tensors, st.extra.at("optimizer_steps").get<std::size_t>());
  extra = st.extra;
  return true;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& lines) {
  std::string text;
  for (const auto& j : lines) text += j.dump() + "\n";
  write_file_atomically(path, text);
}

IdSeq argmax_rows(const Tensor& logits) {
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  IdSeq out(rows);
  auto v = logits.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = v.subspan(r * cols, cols);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace detail

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(base_lr > 0.0) || !(sc_lr > 0.0)) fail("learning rates must be positive");
  if (ss_increment < 0.0 || ss_max < 0.0 || ss_max > 1.0) fail("scheduled sampling probabilities must lie in [0, 1]");
  if (samples < 2) fail("samples must be at least 2 for the average-of-rest baseline");
  if (sc_max_len == 0 || val_max_len == 0) fail("max lengths must be positive");
  if (sample_temperature < 0.0) fail("sample_temperature must be non-negative");
  if (adam.beta1 < 0.0 || adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0 || !(adam.eps > 0.0)) {
    fail("Adam betas must lie in [0, 1) and eps must be positive");
  }
}

ValScores validate_cider(const ParameterSet& params, const ModelConfig& config, const std::vector<EncodedImage>& val,
                         const TrainConfig& tc) {
  const std::size_t n = tc.val_images == 0 ? val.size() : std::min(tc.val_images, val.size());
  const std::vector<EncodedImage> subset(val.begin(), val.begin() + static_cast<std::ptrdiff_t>(n));
  DecodeConfig dc;
  dc.max_len = std::min(tc.val_max_len, config.max_positions());
  const EvalReport r = evaluate(Ensemble::single(params, config), subset, dc, CiderVariant::kCider, true);
  return {r.ensemble.cider, r.l2r.cider, r.r2l.cider};
}

BiCaptionPair mix_inputs(const BiCaptionPair& pair, const IdSeq& fwd_pred, const IdSeq& bwd_pred, double p,
                         Rng& rng) {
  BiCaptionPair out = pair;
  std::bernoulli_distribution coin(std::clamp(p, 0.0, 1.0));
  auto mix = [&](IdSeq& input, const IdSeq& pred, std::size_t valid) {
    if (pred.size() < valid) throw ContractError("fewer predictions than input positions");
    for (std::size_t t = 1; t < valid; ++t) {
      if (coin(rng)) input[t] = pred[t - 1];
    }
  };
  mix(out.fwd_input, fwd_pred, pair.fwd_length);
  mix(out.bwd_input, bwd_pred, pair.bwd_length);
  return out;
}

namespace {

nlohmann::json to_json(const XeEpoch& e) {
  return {{"stage", "xe"},        {"epoch", e.epoch},     {"step", e.step},
          {"loss", e.loss},       {"lr", e.lr},           {"ss_prob", e.ss_prob},
          {"val_cider", e.val.cider}, {"val_cider_l2r", e.val.cider_l2r}, {"val_cider_r2l", e.val.cider_r2l}};
}

XeEpoch xe_epoch_from_json(const nlohmann::json& j) {
  XeEpoch e;
  e.epoch = j.at("epoch");
  e.step = j.at("step");
  e.loss = j.at("loss");
  e.lr = j.at("lr");
  e.ss_prob = j.at("ss_prob");
  e.val = {j.at("val_cider"), j.at("val_cider_l2r"), j.at("val_cider_r2l")};
  return e;
}

}  // namespace

XeHistory train_xe(ParameterSet& params, const ModelConfig& config, const std::vector<EncodedImage>& train,
                   const std::vector<EncodedImage>& val, const TrainConfig& tc, Rng& rng, const TrainPaths& paths,
                   bool resume) {
  config.validate();
  tc.validate();
  if (train.empty() || val.empty()) throw ContractError("training needs non-empty train and validation splits");
  Adam opt(params.tensors(), tc.adam);
  XeHistory hist;
  const bool checkpointing = !paths.checkpoint_dir.empty();
  if (resume && checkpointing) {
    nlohmann::json extra;
    if (detail::load_stage(paths.checkpoint_dir, "xe", params, config, opt, extra)) {
      for (const auto& e : extra.at("history")) hist.epochs.push_back(xe_epoch_from_json(e));
      hist.best_epoch = extra.at("best_epoch");
      hist.best_val_cider = extra.at("best_val_cider");
      detail::set_rng_state(rng, extra.at("rng"));
      log_info("resuming XE training after epoch " + std::to_string(hist.epochs.size()));
    }
  }
  const ForwardOptions train_opts{true, &rng};
  const std::size_t V = config.vocab_size;
  for (std::size_t epoch = hist.epochs.size(); epoch < tc.xe_epochs; ++epoch) {
    const double ss = scheduled_sampling_prob(epoch, tc.ss_increment, tc.ss_every, tc.ss_max);
    double loss_sum = 0.0, lr = 0.0;
    std::size_t batches = 0;
    for (const auto& batch : detail::epoch_batches(train.size(), tc.batch_size, rng)) {
      lr = lr_schedule(opt.steps() + 1, tc.warmup_steps, tc.base_lr);
      std::vector<Tensor> terms;
      std::size_t tokens = 0;
      for (std::size_t idx : batch) {
        const EncodedImage& img = train[idx];
        const Tensor ctx = encode(img.features, params, config, train_opts);
        for (BiCaptionPair pair : make_pairs(img.refs, V, rng)) {
          if (ss > 0.0) {
            IdSeq fp, bp;
            {
              NoGradScope no_grad;
              const DecoderLogits greedy = decode_train(ctx, pair, params, config);
              fp = detail::argmax_rows(greedy.fwd);
              bp = detail::argmax_rows(greedy.bwd);
            }
            pair = mix_inputs(pair, fp, bp, ss, rng);
          }
          const XeTerms x = xe_terms(decode_train(ctx, pair, params, config, train_opts), pair);
          if (tc.xe_flows != FlowSelection::kR2L) {
            terms.push_back(x.fwd);
            tokens += x.fwd_tokens;
          }
          if (tc.xe_flows != FlowSelection::kL2R) {
            terms.push_back(x.bwd);
            tokens += x.bwd_tokens;
          }
        }
      }
      Tensor loss = add_n(terms);
      if (tc.xe_reduction == Reduction::kMean && tokens > 0) loss = scale(loss, 1.0 / static_cast<double>(tokens));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        std::string ids;
        for (std::size_t idx : batch) ids += (ids.empty() ? "" : ",") + train[idx].image_id;
        throw TrainingError("non-finite XE loss at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(opt.steps() + 1) + " (lr " + std::to_string(lr) + ", images " + ids + ")");
      }
      backward(loss);
      opt.step(lr);
      loss_sum += value;
      ++batches;
    }
    XeEpoch rec;
    rec.epoch = epoch;
    rec.step = opt.steps();
    rec.loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    rec.lr = lr;
    rec.ss_prob = ss;
    rec.val = validate_cider(params, config, val, tc);
    hist.epochs.push_back(rec);
    if (rec.val.cider > hist.best_val_cider) {
      hist.best_val_cider = rec.val.cider;
      hist.best_epoch = epoch;
      if (checkpointing) save_checkpoint(params, config, paths.checkpoint_dir / "xe_best.ckpt");
    }
    log_info("xe epoch " + std::to_string(epoch) + " loss " + std::to_string(rec.loss) + " val CIDEr " +
             std::to_string(rec.val.cider));
    std::vector<nlohmann::json> lines;
    for (const auto& e : hist.epochs) lines.push_back(to_json(e));
    if (checkpointing) {
      detail::save_stage(paths.checkpoint_dir, "xe", params, config, opt,
                         {{"history", lines},
                          {"best_epoch", hist.best_epoch},
                          {"best_val_cider", hist.best_val_cider},
                          {"rng", detail::rng_state(rng)}});
    }
    if (!paths.log_path.empty()) detail::write_jsonl(paths.log_path, lines);
  }
  return hist;
}

}  // namespace cbt
