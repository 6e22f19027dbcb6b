// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "cbt/autodiff.hpp"
#include "cbt/bleu.hpp"
#include "cbt/checkpoint.hpp"
#include "cbt/cider.hpp"
#include "cbt/commands.hpp"
#include "cbt/losses.hpp"
#include "cbt/scst.hpp"
#include "cbt/search.hpp"
#include "cbt/transformer.hpp"
#include "fixtures.hpp"
#include "metric_oracles.hpp"
#include "op_reference.hpp"

using namespace cbt;
using namespace cbt::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

TinyModel random_tiny(Rng& rng, double lambda, std::size_t vocab) {
  const std::size_t widths[] = {8, 12, 16};
  const std::size_t d = widths[rng() % 3];
  std::vector<std::size_t> heads;
  for (std::size_t h : {1, 2, 4})
    if (d % h == 0) heads.push_back(h);
  const ModelConfig c = tiny_config(vocab, lambda, rng() % 2 ? Activation::kTanh : Activation::kRelu, 1 + rng() % 2, d,
                                    heads[rng() % heads.size()]);
  return tiny_model(c, rng());
}

Outcome lambda_zero_reduction() {
  Rng rng(101);
  std::size_t equal = 0;
  const std::size_t trials = 50;
  for (std::size_t i = 0; i < trials; ++i) {
    const TinyModel m = random_tiny(rng, 0.0, 5 + rng() % 10);
    const Tensor ctx = encode(random_matrix(1 + rng() % 5, m.config.feature_dim, rng), m.params, m.config);
    const BiCaptionPair pair = random_pair(m.config.vocab_size, 6, rng);
    const DecoderLogits got = decode_train(ctx, pair, m.params, m.config);
    const bool f = bit_equal(got.fwd.values(), reference::unidirectional_logits(ctx, pair.fwd_input, m.params, m.config).values());
    const bool b = bit_equal(got.bwd.values(), reference::unidirectional_logits(ctx, pair.bwd_input, m.params, m.config).values());
    equal += f && b;
  }
  return {equal == trials, std::to_string(equal) + "/" + std::to_string(trials) + " configurations bit-exact"};
}

Outcome causality() {
  Rng rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_real_distribution<double> lam(0.05, 1.0);
    const TinyModel m = random_tiny(rng, lam(rng), 11);
    const Tensor ctx = encode(random_matrix(3, m.config.feature_dim, rng), m.params, m.config);
    const std::size_t nf = 1 + rng() % 6, nb = 1 + rng() % 6;
    const IdSeq ft = random_target(nf, 11, rng), bt = random_target(nb, 11, rng);
    const std::size_t t = rng() % std::max(nf, nb);
    // targets at index >= t feed input positions > t
    IdSeq ft2 = ft, bt2 = bt;
    const int which = trial % 3;
    for (std::size_t j = t; j < nf; ++j)
      if (which != 1) ft2[j] = 3 + (ft2[j] - 3 + 1 + static_cast<int>(rng() % 7)) % 8;
    for (std::size_t j = t; j < nb; ++j)
      if (which != 0) bt2[j] = 3 + (bt2[j] - 3 + 1 + static_cast<int>(rng() % 7)) % 8;
    const DecoderLogits a = decode_train(ctx, make_pair_from_targets(ft, bt, 11), m.params, m.config);
    const DecoderLogits b = decode_train(ctx, make_pair_from_targets(ft2, bt2, 11), m.params, m.config);
    for (std::size_t r = 0; r <= t && r < a.fwd.dim(0); ++r)
      for (std::size_t c = 0; c < 11; ++c) {
        worst = std::max(worst, std::abs(a.fwd.at(r, c) - b.fwd.at(r, c)));
        worst = std::max(worst, std::abs(a.bwd.at(r, c) - b.bwd.at(r, c)));
      }
  }
  return {worst <= 1e-6, "max change of a visible logit " + fmt(worst)};
}

Outcome gradient() {
  double worst = 0.0;
  bool passed = true;
  std::string note;
  for (Activation af : {Activation::kRelu, Activation::kTanh}) {
    const GradCheckReport r = gradcheck_instance(0.1, af, 3, 1e-4);
    worst = std::max(worst, r.max_relative_error);
    passed = passed && r.passed && r.max_relative_error < 1e-4;
    note += std::string(note.empty() ? "" : ", ") + to_string(af) + " " + fmt(r.max_relative_error, 3) + " over " +
            std::to_string(r.elements_checked);
  }
  return {passed, "max relative error " + note};
}

Outcome incremental() {
  Rng rng(404);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_real_distribution<double> lam(0.0, 1.0);
    const TinyModel m = random_tiny(rng, lam(rng), 11);
    const Tensor ctx = encode(random_matrix(3, m.config.feature_dim, rng), m.params, m.config);
    const BiCaptionPair pair = random_pair(11, 6, rng);
    const DecoderLogits full = decode_train(ctx, pair, m.params, m.config);
    const ContextCache cache = prepare_context(ctx, m.params, m.config);
    IncrementalState state;
    for (std::size_t t = 0; t < std::max(pair.fwd_length, pair.bwd_length); ++t) {
      const auto f = t < pair.fwd_length ? std::optional<int>(pair.fwd_input[t]) : std::nullopt;
      const auto b = t < pair.bwd_length ? std::optional<int>(pair.bwd_input[t]) : std::nullopt;
      StepOutput s = decode_step(cache, std::move(state), f, b, m.params, m.config);
      state = std::move(s.state);
      if (f) worst = std::max(worst, max_abs_diff(s.fwd_logits.values(), std::span(full.fwd.values()).subspan(t * 11, 11)));
      if (b) worst = std::max(worst, max_abs_diff(s.bwd_logits.values(), std::span(full.bwd.values()).subspan(t * 11, 11)));
    }
  }
  return {worst <= 1e-5, "max row difference " + fmt(worst)};
}

void enumerate(std::size_t vocab, std::size_t max_len, IdSeq& prefix, std::vector<IdSeq>& out) {
  for (int k = 1; k < static_cast<int>(vocab); ++k) {
    prefix.push_back(k);
    if (k == kEosId || prefix.size() == max_len) {
      out.push_back(prefix);
    } else {
      enumerate(vocab, max_len, prefix, out);
    }
    prefix.pop_back();
  }
}

Outcome beam_oracle() {
  PrecisionScope f64(Precision::kFloat64);
  Rng rng(505);
  std::vector<IdSeq> all;
  IdSeq prefix;
  enumerate(4, 3, prefix, all);
  std::size_t agree = 0;
  const std::size_t models = 25;
  for (std::size_t i = 0; i < models; ++i) {
    ModelConfig c = tiny_config(4, 0.0, rng() % 2 ? Activation::kTanh : Activation::kRelu);
    c.max_len = 4;
    const TinyModel m = tiny_model(c, rng());
    const Tensor feats = random_matrix(3, c.feature_dim, rng);
    const ContextCache cache = prepare_context(encode(feats, m.params, c), m.params, c);
    // score every sequence in both flows at once; at lambda 0 they do not interact
    IdSeq best_f, best_b;
    double top_f = -INFINITY, top_b = -INFINITY;
    for (const IdSeq& s : all) {
      IncrementalState state;
      int fin = l2r_id(4), bin = r2l_id(4);
      double lf = 0.0, lb = 0.0;
      for (int tok : s) {
        StepOutput o = decode_step(cache, std::move(state), fin, bin, m.params, c);
        state = std::move(o.state);
        lf += std::log(o.fwd_probs[static_cast<std::size_t>(tok)]);
        lb += std::log(o.bwd_probs[static_cast<std::size_t>(tok)]);
        fin = bin = tok;
      }
      if (lf > top_f) top_f = lf, best_f = s;
      if (lb > top_b) top_b = lb, best_b = s;
    }
    DecodeConfig dc;
    dc.total_beam = 128;
    dc.max_len = 3;
    const BeamResult r = beam_search_bidir(Ensemble::single(m.params, c), feats, dc);
    agree += r.fwd.front().tokens == best_f && r.bwd.front().tokens == best_b;
  }
  return {agree == models, std::to_string(agree) + "/" + std::to_string(models) + " models match the exhaustive argmax"};
}

std::vector<EncodedImage> tiny_images(std::size_t n, std::size_t vocab, Rng& rng) {
  std::vector<EncodedImage> out;
  for (std::size_t i = 0; i < n; ++i) {
    EncodedImage img;
    img.image_id = std::to_string(i);
    img.features = random_matrix(3, 6, rng);
    for (int r = 0; r < 3; ++r) {
      IdSeq t = random_target(2 + r, vocab, rng);
      t.pop_back();
      img.refs.push_back(t);
    }
    out.push_back(img);
  }
  return out;
}

Outcome scst_baseline() {
  Rng rng(606);
  TinyModel m = tiny_model(tiny_config(9, 0.5), 7);
  const auto images = tiny_images(4, 9, rng);
  TrainConfig tc;
  tc.sc_max_len = 6;
  std::size_t unchanged = 0, antisymmetric = 0;
  const std::size_t vectors = 1000;
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (std::size_t i = 0; i < vectors; ++i) {
    const double value = u(rng);
    tc.samples = 2 + rng() % 4;
    const ParameterSet before = m.params.clone();
    Adam opt(m.params.tensors(), tc.adam);
    const RewardFn constant = [value](std::size_t, const IdSeq&) { return value; };
    const auto res = scst_step(m.params, m.config, images, {rng() % 4, rng() % 4}, constant, tc, opt, 1e-2, rng);
    bool same = true;
    const auto a = before.named(), b = m.params.named();
    for (std::size_t k = 0; k < a.size(); ++k) same = same && bit_equal(a[k].tensor.values(), b[k].tensor.values());
    for (const auto* side : {&res.advantages_fwd, &res.advantages_bwd})
      for (const auto& adv : *side)
        for (double x : adv) same = same && x == 0.0;
    unchanged += same;
  }
  tc.samples = 2;
  TinyModel moving = tiny_model(tiny_config(9, 0.5), 8);
  Adam opt(moving.params.tensors(), tc.adam);
  for (std::size_t i = 0; i < vectors; ++i) {
    const std::vector<double> rewards = {u(rng), u(rng)};
    const auto adv = average_of_rest_advantages(rewards);
    bool ok = adv[0] == -adv[1] && adv[0] == rewards[0] - rewards[1];
    if (i % 10 == 0) {
      const RewardFn noisy = [&](std::size_t, const IdSeq&) { return u(rng); };
      const auto res = scst_step(moving.params, moving.config, images, {i % 4}, noisy, tc, opt, 1e-3, rng);
      ok = ok && res.advantages_fwd[0][0] == -res.advantages_fwd[0][1] &&
           res.advantages_bwd[0][0] == -res.advantages_bwd[0][1];
    }
    antisymmetric += ok;
  }
  return {unchanged == vectors && antisymmetric == vectors,
          "zero update " + std::to_string(unchanged) + "/" + std::to_string(vectors) + ", antisymmetric " +
              std::to_string(antisymmetric) + "/" + std::to_string(vectors)};
}

Outcome metric_oracles() {
  const std::vector<std::string> pool = {"a", "red", "car", "on", "the", "road", "two", "blue", "dogs", "park"};
  Rng rng(707);
  auto sentence = [&](std::size_t lo, std::size_t hi) {
    TokenSeq s(lo + rng() % (hi - lo + 1));
    for (auto& w : s) w = pool[rng() % pool.size()];
    return s;
  };
  std::vector<TokenSeq> cands;
  std::vector<std::vector<TokenSeq>> refs;
  for (int i = 0; i < 10; ++i) {
    std::vector<TokenSeq> r;
    for (int k = 0; k < 3 + i % 3; ++k) r.push_back(sentence(3, 9));
    TokenSeq c = sentence(2, 10);
    if (i % 2 == 0) c.insert(c.begin(), r[0].begin(), r[0].begin() + 3);
    refs.push_back(r);
    cands.push_back(c);
  }
  double worst = 0.0;
  for (bool d : {false, true}) {
    const auto expect = oracle::cider(cands, refs, d);
    const auto got = cider(cands, refs, d ? CiderVariant::kCiderD : CiderVariant::kCider);
    for (std::size_t i = 0; i < expect.size(); ++i) worst = std::max(worst, std::abs(got.per_image[i] - expect[i]));
    worst = std::max(worst, std::abs(got.corpus - oracle::mean(expect)));
  }
  const auto eb = oracle::bleu(cands, refs);
  const auto gb = bleu(cands, refs);
  for (std::size_t n = 0; n < 4; ++n) worst = std::max(worst, std::abs(gb.bleu[n] - eb[n]));

  const std::vector<std::vector<TokenSeq>> unique = {
      {{"alpha", "beta", "gamma", "delta", "eps"}},
      {{"one", "two", "three", "four", "five"}},
      {{"red", "green", "blue", "cyan", "pink"}},
  };
  const double identical = cider({unique[0][0], unique[1][0], unique[2][0]}, unique).corpus;
  return {worst <= 1e-6 && std::abs(identical - 10.0) < 1e-9,
          "max deviation " + fmt(worst) + ", identical-candidate CIDEr " + fmt(identical, 10)};
}

// Desk-scale training shared by the last three criteria.
struct SeedRun {
  std::uint64_t seed = 0;
  RunConfig run;
  EvalReport xe;
  ScHistory sc;
};

struct DeskRuns {
  RunConfig base;
  std::vector<SeedRun> seeds;
  std::string error;
};

double kendall_tau(const std::vector<double>& v) {
  double s = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j, ++pairs) s += (v[j] > v[i]) - (v[j] < v[i]);
  return pairs ? s / static_cast<double>(pairs) : 0.0;
}

RunConfig decode_with(const RunConfig& run, const std::vector<fs::path>& ckpts, const fs::path& output) {
  RunConfig r = run;
  std::string list;
  for (const auto& c : ckpts) list += (list.empty() ? "" : ",") + c.string();
  r.set("decode.checkpoints", list);
  r.set("decode.output", output.string());
  return r;
}

fs::path xe_best(const SeedRun& s) { return s.run.run_dir() / "checkpoints" / "xe_best.ckpt"; }

DeskRuns desk_training(const fs::path& config, const fs::path& work, std::ostream& log) {
  DeskRuns d;
  d.base = RunConfig::from_file(config);
  d.base.set("log_level", "warn");
  d.base.set("train.resume", "false");
  d.base.set("run_dir", (work / "corpus").string());
  d.base.validate();
  cmd_synth(d.base, log);
  cmd_vocab(d.base, log);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SeedRun s;
    s.seed = seed;
    s.run = d.base;
    s.run.set("seed", std::to_string(seed));
    s.run.set("run_dir", (work / ("seed" + std::to_string(seed))).string());
    fs::create_directories(s.run.run_dir());
    fs::copy(d.base.run_dir() / "data", s.run.run_dir() / "data", fs::copy_options::recursive);
    fs::copy_file(d.base.run_dir() / "vocab.json", s.run.run_dir() / "vocab.json");
    std::cout << "  training seed " << seed << " (XE)" << std::endl;
    cmd_train_xe(s.run, log);
    s.xe = cmd_decode(decode_with(s.run, {xe_best(s)}, s.run.run_dir() / "decode" / "xe_test.jsonl"), log).report;
    std::cout << "  training seed " << seed << " (SC)" << std::endl;
    s.sc = cmd_train_sc(s.run, log);
    d.seeds.push_back(std::move(s));
  }
  return d;
}

Outcome xe_trend(const DeskRuns& d) {
  std::size_t ok = 0;
  std::string note;
  for (const auto& s : d.seeds) {
    const double e = s.xe.ensemble.cider, l = s.xe.l2r.cider, r = s.xe.r2l.cider;
    ok += e >= l && e >= r;
    note += " seed" + std::to_string(s.seed) + " ens " + fmt(100 * e) + " l2r " + fmt(100 * l) + " r2l " + fmt(100 * r) + ";";
  }
  return {ok == d.seeds.size(), std::to_string(ok) + "/3 seeds;" + note};
}

Outcome sc_stage(const DeskRuns& d) {
  std::size_t improved = 0, trending = 0;
  std::string note;
  for (const auto& s : d.seeds) {
    std::vector<double> rf, rb;
    for (const auto& e : s.sc.epochs) {
      if (rf.size() == 5) break;
      rf.push_back(e.reward_fwd);
      rb.push_back(e.reward_bwd);
    }
    const double final_val = s.sc.epochs.empty() ? s.sc.initial.cider : s.sc.epochs.back().val.cider;
    improved += final_val > s.sc.initial.cider;
    const double tf = kendall_tau(rf), tb = kendall_tau(rb);
    trending += tf > 0.0 && tb > 0.0;
    note += " seed" + std::to_string(s.seed) + " val " + fmt(100 * s.sc.initial.cider) + "->" + fmt(100 * final_val) +
            " tau " + fmt(tf, 2) + "/" + fmt(tb, 2) + ";";
  }
  return {improved >= 2 && trending == d.seeds.size(),
          "val improved " + std::to_string(improved) + "/3, reward trend " + std::to_string(trending) + "/3;" + note};
}

Outcome ensemble_stacking(const DeskRuns& d, const fs::path& work, std::ostream& log) {
  std::size_t ok = 0;
  std::string note;
  const std::pair<std::size_t, std::size_t> pairs[] = {{0, 1}, {1, 2}, {0, 2}};
  for (const auto& [a, b] : pairs) {
    const auto& sa = d.seeds[a];
    const auto& sb = d.seeds[b];
    const fs::path out = work / ("ensemble_" + std::to_string(a) + std::to_string(b) + ".jsonl");
    const double e = cmd_decode(decode_with(sa.run, {xe_best(sa), xe_best(sb)}, out), log).report.ensemble.cider;
    const double single = std::max(sa.xe.ensemble.cider, sb.xe.ensemble.cider);
    ok += e >= single;
    note += " (" + std::to_string(a) + "," + std::to_string(b) + ") " + fmt(100 * e) + " vs " + fmt(100 * single) + ";";
  }

  // One-member ensemble against direct decode_step along greedy trajectories.
  const LoadedCheckpoint ck = load_checkpoint(xe_best(d.seeds[0]));
  const auto test = encode_dataset(load_dataset(run_layout::data(d.base, "test")), Vocabulary::load(run_layout::vocab(d.base)));
  const Ensemble single = Ensemble::single(ck.params, ck.config);
  std::size_t identical = 0;
  const std::size_t checked = std::min<std::size_t>(50, test.size());
  for (std::size_t i = 0; i < checked; ++i) {
    const auto ctx = single.contexts(test[i].features);
    const ContextCache direct = prepare_context(encode(test[i].features, ck.params, ck.config), ck.params, ck.config);
    Ensemble::State es = single.initial_state();
    IncrementalState ds;
    int fin = l2r_id(ck.config.vocab_size), bin = r2l_id(ck.config.vocab_size);
    bool same = true;
    for (std::size_t t = 0; t < 8 && same; ++t) {
      Ensemble::Step a = single.step(ctx, std::move(es), fin, bin);
      StepOutput b = decode_step(direct, std::move(ds), fin, bin, ck.params, ck.config);
      same = bit_equal(a.fwd_probs, b.fwd_probs) && bit_equal(a.bwd_probs, b.bwd_probs);
      es = std::move(a.state);
      ds = std::move(b.state);
      fin = static_cast<int>(std::max_element(b.fwd_probs.begin() + 1, b.fwd_probs.end()) - b.fwd_probs.begin());
      bin = static_cast<int>(std::max_element(b.bwd_probs.begin() + 1, b.bwd_probs.end()) - b.bwd_probs.begin());
    }
    identical += same;
  }
  return {ok >= 2 && identical == checked, std::to_string(ok) + "/3 pairs;" + note + " M=1 bit-identical on " +
                                               std::to_string(identical) + "/" + std::to_string(checked) + " images"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  fs::path work = "acceptance_runs";
  fs::path config = "configs/desk.cfg";
  std::set<int> known;
  bool skip_desk = false;
  app.add_option("--work-dir", work, "scratch directory for the desk-scale runs");
  app.add_option("--config", config, "desk-scale configuration")->check(CLI::ExistingFile);
  app.add_option("--known-failure", known, "criteria whose failure is documented and does not fail the run");
  app.add_flag("--skip-desk", skip_desk, "only run the property criteria");
  CLI11_PARSE(app, argc, argv);

  fs::remove_all(work);
  fs::create_directories(work);
  std::ofstream log(work / "commands.log");

  int failures = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool tolerated = !o.pass && known.count(id);
    if (!o.pass && !tolerated) ++failures;
    std::cout << (o.pass ? "PASS" : tolerated ? "FAIL (known)" : "FAIL") << "  criterion " << id << "  " << name
              << ": " << o.detail << " [" << fmt(secs, 3) << " s]" << std::endl;
  };

  report(1, "lambda=0 reduction", lambda_zero_reduction);
  report(2, "causality", causality);
  report(3, "gradient check", gradient);
  report(4, "incremental equivalence", incremental);
  report(5, "beam-search oracle", beam_oracle);
  report(6, "SCST zero baseline", scst_baseline);
  report(7, "metric oracles", metric_oracles);
  if (skip_desk) return failures == 0 ? 0 : 1;

  DeskRuns desk;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    desk = desk_training(config, work, log);
  } catch (const std::exception& e) {
    desk.error = e.what();
  }
  std::cout << "  desk-scale training took "
            << fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 4) << " s" << std::endl;
  auto desk_check = [&](const std::function<Outcome()>& f) {
    return [&, f]() { return desk.error.empty() ? f() : Outcome{false, "training failed: " + desk.error}; };
  };
  report(8, "XE ensemble trend", desk_check([&] { return xe_trend(desk); }));
  report(9, "SC stage", desk_check([&] { return sc_stage(desk); }));
  report(10, "ensemble stacking", desk_check([&] { return ensemble_stacking(desk, work, log); }));
  return failures == 0 ? 0 : 1;
}
