#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "cbt/autodiff.hpp"
#include "cbt/losses.hpp"
#include "cbt/ops.hpp"
#include "cbt/optimizer.hpp"
#include "cbt/schedule.hpp"
#include "cbt/scst.hpp"
#include "cbt/transformer.hpp"
#include "cbt/xe_trainer.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace cbt;
using namespace cbt::testing;
namespace fs = std::filesystem;

namespace {

std::vector<EncodedImage> tiny_images(std::size_t n, std::size_t vocab_size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EncodedImage> out;
  for (std::size_t i = 0; i < n; ++i) {
    EncodedImage img;
    img.image_id = "img" + std::to_string(i);
    img.features = random_matrix(3, 6, rng);
    for (int r = 0; r < 3; ++r) {
      IdSeq t = random_target(2 + r, vocab_size, rng);
      t.pop_back();
      img.refs.push_back(t);
    }
    out.push_back(img);
  }
  return out;
}

TrainConfig tiny_train_config() {
  TrainConfig tc;
  tc.batch_size = 2;
  tc.xe_epochs = 2;
  tc.base_lr = 1e-2;
  tc.warmup_steps = 4;
  tc.sc_epochs = 1;
  tc.sc_lr = 1e-3;
  tc.samples = 3;
  tc.sc_max_len = 6;
  tc.val_max_len = 6;
  return tc;
}

Tensor uniform_logits(std::size_t rows, std::size_t vocab) { return Tensor::zeros({rows, vocab}); }

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("learning-rate schedule peaks at warmup") {
    const double base = 5e-4;
    CHECK(lr_schedule(1000, 1000, base) == doctest::Approx(base));
    CHECK(lr_schedule(250, 1000, base) == doctest::Approx(base * 0.25));
    CHECK(lr_schedule(4000, 1000, base) == doctest::Approx(base * 0.5));
    CHECK(lr_schedule(1, 1000, base) == doctest::Approx(base / 1000.0));
    double prev = 0.0;
    for (std::size_t s = 1; s <= 1000; ++s) {
      const double lr = lr_schedule(s, 1000, base);
      CHECK(lr > prev);
      prev = lr;
    }
    for (std::size_t s = 1001; s <= 3000; s += 7) {
      const double lr = lr_schedule(s, 1000, base);
      CHECK(lr < prev);
      prev = lr;
    }
  }

  TEST_CASE("scheduled sampling probability") {
    CHECK(scheduled_sampling_prob(0) == 0.0);
    CHECK(scheduled_sampling_prob(4) == 0.0);
    CHECK(scheduled_sampling_prob(5) == doctest::Approx(0.05));
    CHECK(scheduled_sampling_prob(14) == doctest::Approx(0.10));
    CHECK(scheduled_sampling_prob(25) == doctest::Approx(0.25));
    CHECK(scheduled_sampling_prob(100) == doctest::Approx(0.25));
  }

  TEST_CASE("uniform logits give ln V per token") {
    PrecisionScope f64(Precision::kFloat64);
    const BiCaptionPair pair = make_pair_from_targets({3, 4, kEosId}, {5, kEosId}, 10);
    const DecoderLogits logits{uniform_logits(pair.length(), 10), uniform_logits(pair.length(), 10)};
    const XeTerms x = xe_terms(logits, pair);
    CHECK(x.fwd_tokens == 3);
    CHECK(x.bwd_tokens == 2);
    CHECK(x.fwd.item() == doctest::Approx(3 * std::log(10.0)).epsilon(1e-12));
    CHECK(x.bwd.item() == doctest::Approx(2 * std::log(10.0)).epsilon(1e-12));
    CHECK(joint_xe_loss(logits, pair).item() == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    CHECK(joint_xe_loss(logits, pair, Reduction::kSum).item() == doctest::Approx(5 * std::log(10.0)).epsilon(1e-12));
  }

  TEST_CASE("loss vanishes as the target margin grows") {
    PrecisionScope f64(Precision::kFloat64);
    const BiCaptionPair pair = make_pair_from_targets({3, kEosId}, {4, kEosId}, 6);
    double prev = INFINITY;
    for (double margin : {1.0, 5.0, 20.0, 60.0}) {
      auto peaked = [&](const IdSeq& targets) {
        std::vector<double> v(pair.length() * 6, 0.0);
        for (std::size_t t = 0; t < targets.size(); ++t)
          if (targets[t] != kPadId) v[t * 6 + static_cast<std::size_t>(targets[t])] = margin;
        return Tensor::from_values({pair.length(), 6}, v);
      };
      const double loss = joint_xe_loss({peaked(pair.fwd_target), peaked(pair.bwd_target)}, pair).item();
      CHECK(loss < prev);
      CHECK(loss == doctest::Approx(std::log1p(5.0 * std::exp(-margin))).epsilon(1e-9));
      prev = loss;
    }
    CHECK(prev < 1e-20);
  }

  TEST_CASE("summed loss against a hand computation") {
    PrecisionScope f64(Precision::kFloat64);
    Rng rng(5);
    const BiCaptionPair pair = make_pair_from_targets({3, 4, 5, kEosId}, {6, kEosId}, 7);
    const Tensor lf = random_matrix(pair.length(), 7, rng), lb = random_matrix(pair.length(), 7, rng);
    auto nll = [&](const Tensor& l, const IdSeq& targets) {
      double s = 0.0;
      for (std::size_t t = 0; t < targets.size(); ++t) {
        if (targets[t] == kPadId) continue;
        double z = 0.0;
        for (std::size_t k = 0; k < 7; ++k) z += std::exp(l[t * 7 + k]);
        s += std::log(z) - l[t * 7 + static_cast<std::size_t>(targets[t])];
      }
      return s;
    };
    const double f = nll(lf, pair.fwd_target), b = nll(lb, pair.bwd_target);
    const XeTerms x = xe_terms({lf, lb}, pair);
    CHECK(x.fwd.item() == doctest::Approx(f).epsilon(1e-12));
    CHECK(x.bwd.item() == doctest::Approx(b).epsilon(1e-12));
    CHECK(joint_xe_loss({lf, lb}, pair, Reduction::kSum).item() == doctest::Approx(f + b).epsilon(1e-12));
    CHECK(joint_xe_loss({lf, lb}, pair, Reduction::kMean).item() == doctest::Approx((f + b) / 6.0).epsilon(1e-12));
    CHECK(joint_xe_loss({lf, lb}, pair, Reduction::kSum, FlowSelection::kL2R).item() == doctest::Approx(f).epsilon(1e-12));
    CHECK(joint_xe_loss({lf, lb}, pair, Reduction::kSum, FlowSelection::kR2L).item() == doctest::Approx(b).epsilon(1e-12));
  }

  TEST_CASE("joint gradient is the sum of the per-flow gradients") {
    PrecisionScope f64(Precision::kFloat64);
    const ModelConfig c = tiny_config(9, 0.5);
    TinyModel m = tiny_model(c, 3);
    Rng rng(4);
    const Tensor feats = random_matrix(3, c.feature_dim, rng);
    const BiCaptionPair pair = random_pair(9, 5, rng);
    auto grads = [&](FlowSelection flows) {
      m.params.zero_grad();
      backward(joint_xe_loss(decode_train(encode(feats, m.params, c), pair, m.params, c), pair, Reduction::kSum, flows));
      std::vector<double> g;
      for (const Tensor& t : m.params.tensors()) g.insert(g.end(), t.grad().begin(), t.grad().end());
      return g;
    };
    const auto both = grads(FlowSelection::kBoth), l2r = grads(FlowSelection::kL2R), r2l = grads(FlowSelection::kR2L);
    double worst = 0.0;
    for (std::size_t i = 0; i < both.size(); ++i) worst = std::max(worst, std::abs(both[i] - l2r[i] - r2l[i]));
    CHECK(worst < 1e-12);
  }

  TEST_CASE("mismatched logit rows are a contract error") {
    const BiCaptionPair pair = make_pair_from_targets({3, kEosId}, {4, 5, kEosId}, 6);
    CHECK_THROWS_AS(xe_terms({uniform_logits(2, 6), uniform_logits(3, 6)}, pair), ContractError);
  }

  TEST_CASE("adam first step moves each weight by lr against the gradient sign") {
    PrecisionScope f64(Precision::kFloat64);
    Tensor w = Tensor::from_values({3}, {1.0, -2.0, 0.5}, true);
    Adam opt({w}, AdamConfig{0.9, 0.98, 1e-9, 0.0});
    backward(sum(mul(w, Tensor::from_values({3}, {2.0, -0.5, 0.0}))));
    opt.step(0.1);
    CHECK(w[0] == doctest::Approx(0.9).epsilon(1e-9));
    CHECK(w[1] == doctest::Approx(-1.9).epsilon(1e-9));
    CHECK(w[2] == 0.5);
    CHECK(opt.steps() == 1);
    for (double g : w.grad()) CHECK(g == 0.0);
  }

  TEST_CASE("adam clips the global gradient norm") {
    PrecisionScope f64(Precision::kFloat64);
    Tensor a = Tensor::from_values({1}, {0.0}, true), b = Tensor::from_values({1}, {0.0}, true);
    Adam opt({a, b}, AdamConfig{0.0, 0.0, 0.0, 5.0});
    backward(add(scale(sum(a), 30.0), scale(sum(b), 40.0)));
    // beta = 0 makes the update lr * g / |g| regardless of scale, so read the moments
    CHECK(opt.step(1.0) == doctest::Approx(50.0));
    const auto st = opt.state();
    CHECK(st[0].tensor[0] == doctest::Approx(3.0));
    CHECK(st[2].tensor[0] == doctest::Approx(4.0));
  }

  TEST_CASE("adam state round-trip continues identically") {
    PrecisionScope f64(Precision::kFloat64);
    auto run = [](Tensor& w, Adam& opt, int steps) {
      for (int s = 0; s < steps; ++s) {
        backward(sum(mul(mul(w, w), Tensor::from_values({2}, {1.0, 3.0}))));
        opt.step(0.05);
      }
    };
    Tensor w1 = Tensor::from_values({2}, {1.0, -1.0}, true);
    Adam o1({w1});
    run(w1, o1, 3);
    Tensor w2 = w1.clone(true);
    Adam o2({w2});
    o2.load_state(o1.state(), o1.steps());
    run(w1, o1, 2);
    run(w2, o2, 2);
    CHECK(bit_equal(w1.values(), w2.values()));
    CHECK_THROWS_AS(o2.load_state({}, 1), ContractError);
  }

  TEST_CASE("average-of-rest advantages") {
    const std::vector<double> r = {0.3, 1.1, 0.0, 2.5, 0.7};
    const auto adv = average_of_rest_advantages(r);
    CHECK(std::abs(std::accumulate(adv.begin(), adv.end(), 0.0)) < 1e-12);
    for (std::size_t n = 0; n < r.size(); ++n) {
      double rest = 0.0;
      for (std::size_t m = 0; m < r.size(); ++m)
        if (m != n) rest += r[m];
      CHECK(adv[n] == doctest::Approx(r[n] - rest / 4.0).epsilon(1e-12));
    }
    const auto two = average_of_rest_advantages({0.2, 0.9});
    CHECK(two[0] == doctest::Approx(-0.7));
    CHECK(two[1] == -two[0]);
    for (double a : average_of_rest_advantages({0.4, 0.4, 0.4})) CHECK(a == 0.0);
    CHECK_THROWS_AS(average_of_rest_advantages({1.0}), ConfigError);
  }

  TEST_CASE("sampled log-probabilities match teacher-forced rescoring") {
    PrecisionScope f64(Precision::kFloat64);
    const ModelConfig c = tiny_config(9, 0.7);
    TinyModel m = tiny_model(c, 8);
    Rng rng(9);
    const Tensor ctx = encode(random_matrix(3, c.feature_dim, rng), m.params, c);
    const ContextCache cache = prepare_context(ctx, m.params, c);
    for (const SamplePair& s : sample_captions(m.params, c, cache, 6, 7, rng)) {
      const BiCaptionPair pair = make_pair_from_targets(s.fwd.tokens, s.bwd.tokens, 9);
      const XeTerms x = xe_terms(decode_train(ctx, pair, m.params, c), pair);
      CHECK(-x.fwd.item() == doctest::Approx(s.fwd.logprob).epsilon(1e-9));
      CHECK(-x.bwd.item() == doctest::Approx(s.bwd.logprob).epsilon(1e-9));
      for (int t : s.fwd.tokens) CHECK(t != kPadId);
    }
  }

  TEST_CASE("temperature zero sampling is deterministic argmax") {
    const ModelConfig c = tiny_config(9, 0.4);
    TinyModel m = tiny_model(c, 10);
    Rng rng(11);
    const ContextCache cache = prepare_context(encode(random_matrix(3, c.feature_dim, rng), m.params, c), m.params, c);
    Rng r1(1), r2(2);
    const auto a = sample_captions(m.params, c, cache, 3, 7, r1, 0.0);
    const auto b = sample_captions(m.params, c, cache, 1, 7, r2, 0.0);
    for (const auto& s : a) {
      CHECK(s.fwd.tokens == b[0].fwd.tokens);
      CHECK(s.bwd.tokens == b[0].bwd.tokens);
    }
  }

  TEST_CASE("unit temperature sampling produces distinct captions") {
    const ModelConfig c = tiny_config(12, 0.4);
    TinyModel m = tiny_model(c, 12);
    Rng rng(13);
    const ContextCache cache = prepare_context(encode(random_matrix(3, c.feature_dim, rng), m.params, c), m.params, c);
    std::set<IdSeq> seen;
    for (const auto& s : sample_captions(m.params, c, cache, 10, 7, rng)) seen.insert(s.fwd.tokens);
    CHECK(seen.size() >= 3);
  }

  TEST_CASE("constant reward leaves the model unchanged") {
    const ModelConfig c = tiny_config(9, 0.5);
    TinyModel m = tiny_model(c, 14);
    const ParameterSet before = m.params.clone();
    const auto images = tiny_images(3, 9, 15);
    TrainConfig tc = tiny_train_config();
    Adam opt(m.params.tensors(), tc.adam);
    Rng rng(16);
    std::vector<std::pair<std::size_t, IdSeq>> calls;
    const RewardFn constant = [&](std::size_t image, const IdSeq& caption) {
      calls.emplace_back(image, caption);
      return 0.8;
    };
    const auto res = scst_step(m.params, c, images, {0, 2}, constant, tc, opt, 1e-2, rng);
    CHECK(res.loss == 0.0);
    CHECK(calls.size() == 2 * 2 * tc.samples);
    CHECK(calls.front().first == 0);
    CHECK(calls.back().first == 2);
    for (const auto& adv : res.advantages_fwd)
      for (double a : adv) CHECK(a == 0.0);
    const auto after = m.params.named(), orig = before.named();
    for (std::size_t i = 0; i < orig.size(); ++i) CHECK(bit_equal(after[i].tensor.values(), orig[i].tensor.values()));
  }

  TEST_CASE("rewarded captions become more likely") {
    const ModelConfig c = tiny_config(9, 0.5);
    TinyModel m = tiny_model(c, 17);
    const auto images = tiny_images(1, 9, 18);
    TrainConfig tc = tiny_train_config();
    tc.samples = 4;
    Adam opt(m.params.tensors(), tc.adam);
    Rng rng(19);
    // reward captions that start with word 3
    const RewardFn reward = [](std::size_t, const IdSeq& cap) { return !cap.empty() && cap.front() == 3 ? 1.0 : 0.0; };
    auto prob_first = [&]() {
      const ContextCache cache = prepare_context(encode(images[0].features, m.params, c), m.params, c);
      return decode_step(cache, {}, l2r_id(9), r2l_id(9), m.params, c).fwd_probs[3];
    };
    const double p0 = prob_first();
    for (int s = 0; s < 30; ++s) scst_step(m.params, c, images, {0}, reward, tc, opt, 2e-2, rng);
    CHECK(prob_first() > p0);
  }

  TEST_CASE("non-finite XE loss stops training") {
    const ModelConfig c = tiny_config(9, 0.5);
    TinyModel m = tiny_model(c, 20);
    m.params.output_b.mutable_values()[0] = NAN;
    const auto images = tiny_images(4, 9, 21);
    Rng rng(22);
    CHECK_THROWS_AS(train_xe(m.params, c, images, images, tiny_train_config(), rng), TrainingError);
  }

  TEST_CASE("XE training resumes bit-exactly") {
    const ModelConfig c = tiny_config(9, 0.5);
    const auto images = tiny_images(4, 9, 23);
    const fs::path root = fs::temp_directory_path() / "cbt_unit_resume";
    fs::remove_all(root);
    TrainConfig tc = tiny_train_config();

    TinyModel straight = tiny_model(c, 24);
    Rng r1(25);
    const XeHistory h1 = train_xe(straight.params, c, images, images, tc, r1, {root / "a", {}});

    TinyModel split = tiny_model(c, 24);
    tc.xe_epochs = 1;
    Rng r2(25);
    train_xe(split.params, c, images, images, tc, r2, {root / "b", {}});
    tc.xe_epochs = 2;
    TinyModel resumed = tiny_model(c, 99);
    Rng r3(0);
    const XeHistory h2 = train_xe(resumed.params, c, images, images, tc, r3, {root / "b", {}}, true);

    REQUIRE(h2.epochs.size() == 2);
    CHECK(h2.epochs.back().loss == h1.epochs.back().loss);
    const auto a = straight.params.named(), b = resumed.params.named();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(bit_equal(a[i].tensor.values(), b[i].tensor.values()));
    CHECK(fs::exists(root / "a" / "xe_best.ckpt"));
    CHECK(fs::exists(root / "a" / "xe_last.state"));
  }

  TEST_CASE("XE training lowers the loss") {
    const ModelConfig c = tiny_config(9, 0.5);
    TinyModel m = tiny_model(c, 26);
    const auto images = tiny_images(4, 9, 27);
    TrainConfig tc = tiny_train_config();
    tc.xe_epochs = 15;
    Rng rng(28);
    const XeHistory h = train_xe(m.params, c, images, images, tc, rng);
    CHECK(h.epochs.back().loss < h.epochs.front().loss);
  }
}
