#include "cbt/commands.hpp"

#include <cstdio>
#include <fstream>

#include "cbt/checkpoint.hpp"
#include "cbt/detail/train_common.hpp"
#include "cbt/log.hpp"
#include "cbt/losses.hpp"

namespace cbt {

namespace fs = std::filesystem;

namespace run_layout {
fs::path data(const RunConfig& run, const std::string& split) { return run.run_dir() / "data" / (split + ".jsonl"); }
fs::path vocab(const RunConfig& run) { return run.run_dir() / "vocab.json"; }
fs::path checkpoints(const RunConfig& run) { return run.run_dir() / "checkpoints"; }
fs::path logs(const RunConfig& run) { return run.run_dir() / "logs"; }
fs::path decode_output(const RunConfig& run) {
  const std::string& o = run.get("decode.output");
  return o.empty() ? run.run_dir() / "decode" / (run.get("decode.split") + ".jsonl") : fs::path(o);
}
}  // namespace run_layout

Rng stage_rng(const RunConfig& run, std::uint64_t stage) {
  const std::uint64_t seed = run.get_size("seed");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stage)};
  return Rng(seq);
}

namespace {

constexpr std::uint64_t kSynthStage = 1, kXeStage = 2, kScStage = 3;

void begin(const RunConfig& run, const std::string& command) {
  run.validate();
  const std::string& level = run.get("log_level");
  set_log_level(level == "quiet" ? LogLevel::kQuiet : level == "warn" ? LogLevel::kWarn : LogLevel::kInfo);
  write_file_atomically(run.run_dir() / "config" / (command + ".cfg"), run.dump());
}

Dataset load_split(const RunConfig& run, const std::string& split) {
  const fs::path p = run_layout::data(run, split);
  if (!fs::exists(p)) throw DatasetError("missing " + p.string() + " (run the synth command first)");
  return load_dataset(p);
}

Vocabulary load_vocab(const RunConfig& run) {
  const fs::path p = run_layout::vocab(run);
  if (!fs::exists(p)) throw DatasetError("missing " + p.string() + " (run the vocab command first)");
  return Vocabulary::load(p);
}

struct Prepared {
  Vocabulary vocab;
  std::vector<EncodedImage> train;
  std::vector<EncodedImage> val;
  std::size_t feature_dim = 0;
};

Prepared prepare(const RunConfig& run, std::size_t max_tokens) {
  Prepared p;
  p.vocab = load_vocab(run);
  p.train = encode_dataset(load_split(run, "train"), p.vocab, max_tokens);
  p.val = encode_dataset(load_split(run, "val"), p.vocab, max_tokens);
  if (p.train.empty()) throw DatasetError("training split is empty");
  p.feature_dim = p.train.front().features.dim(1);
  return p;
}

XeHistory run_xe(const RunConfig& run, const ModelConfig& config, const Prepared& data, const fs::path& dir) {
  Rng rng = stage_rng(run, kXeStage);
  ParameterSet params = ParameterSet::initialize(config, rng);
  TrainPaths paths{dir / "checkpoints", dir / "logs" / "xe.jsonl"};
  return train_xe(params, config, data.train, data.val, train_config(run), rng, paths,
                  run.get_bool("train.resume"));
}

void print_xe(const XeHistory& h, std::ostream& out) {
  out << "epoch   loss      lr        ss    val CIDEr (ens / l2r / r2l)\n";
  for (const auto& e : h.epochs) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%5zu  %7.4f  %.3e  %.2f  %6.1f / %6.1f / %6.1f\n", e.epoch, e.loss, e.lr,
                  e.ss_prob, 100 * e.val.cider, 100 * e.val.cider_l2r, 100 * e.val.cider_r2l);
    out << buf;
  }
  out << "best epoch " << h.best_epoch << "\n";
}

}  // namespace

SynthCorpus cmd_synth(const RunConfig& run, std::ostream& out) {
  begin(run, "synth");
  RunConfig corpus = run;
  corpus.set("seed", run.get("synth.seed"));
  Rng rng = stage_rng(corpus, kSynthStage);
  SynthCorpus c = synth_corpus(synth_spec(run), rng);
  save_dataset(c.train.images, run_layout::data(run, "train"));
  save_dataset(c.val.images, run_layout::data(run, "val"));
  save_dataset(c.test.images, run_layout::data(run, "test"));
  out << "wrote " << c.train.images.size() << " train, " << c.val.images.size() << " val, " << c.test.images.size()
      << " test images to " << (run.run_dir() / "data").string() << "\n";
  return c;
}

Vocabulary cmd_vocab(const RunConfig& run, std::ostream& out) {
  begin(run, "vocab");
  const Dataset train = load_split(run, "train");
  Vocabulary v = build_vocab(caption_records(train), run.get_size("vocab.min_count"));
  v.save(run_layout::vocab(run));
  out << "vocabulary of " << v.size() << " output tokens (" << v.size() - kFirstWordId << " words) written to "
      << run_layout::vocab(run).string() << "\n";
  return v;
}

XeHistory cmd_train_xe(const RunConfig& run, std::ostream& out) {
  begin(run, "train-xe");
  const ModelConfig probe = model_config(run, 16, 1);
  const Prepared data = prepare(run, probe.max_len);
  const ModelConfig config = model_config(run, data.vocab.size(), data.feature_dim);
  config.validate();
  out << "parameters: " << ParameterSet::manifest(config).size() << " tensors\n";
  XeHistory h = run_xe(run, config, data, run.run_dir());
  print_xe(h, out);
  return h;
}

ScHistory cmd_train_sc(const RunConfig& run, std::ostream& out) {
  begin(run, "train-sc");
  fs::path init = run.get("train.init_checkpoint");
  if (init.empty()) init = run_layout::checkpoints(run) / "xe_best.ckpt";
  if (!fs::exists(init)) throw CheckpointError("missing " + init.string() + " (run train-xe first)");
  LoadedCheckpoint ck = load_checkpoint(init);
  const Prepared data = prepare(run, ck.config.max_len);
  if (ck.config.vocab_size != data.vocab.size()) {
    throw CheckpointError(init.string() + " has " + std::to_string(ck.config.vocab_size) +
                          " output classes but the vocabulary has " + std::to_string(data.vocab.size()));
  }
  Rng rng = stage_rng(run, kScStage);
  TrainPaths paths{run_layout::checkpoints(run), run_layout::logs(run) / "sc.jsonl"};
  ScHistory h = train_sc(ck.params, ck.config, data.train, data.val, train_config(run), rng, paths,
                         run.get_bool("train.resume"));
  char buf[160];
  std::snprintf(buf, sizeof buf, "start  val CIDEr %6.1f\n", 100 * h.initial.cider);
  out << buf;
  out << "epoch   loss      reward l2r  reward r2l  val CIDEr\n";
  for (const auto& e : h.epochs) {
    std::snprintf(buf, sizeof buf, "%5zu  %8.4f  %10.4f  %10.4f  %9.1f\n", e.epoch, e.loss, e.reward_fwd,
                  e.reward_bwd, 100 * e.val.cider);
    out << buf;
  }
  return h;
}

DecodeOutcome cmd_decode(const RunConfig& run, std::ostream& out) {
  begin(run, "decode");
  std::vector<fs::path> paths;
  for (const auto& p : run.get_list("decode.checkpoints")) paths.emplace_back(p);
  if (paths.empty()) {
    const fs::path sc = run_layout::checkpoints(run) / "sc_best.ckpt";
    paths.push_back(fs::exists(sc) ? sc : run_layout::checkpoints(run) / "xe_best.ckpt");
  }
  std::vector<LoadedCheckpoint> models;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw CheckpointError("missing checkpoint " + p.string());
    models.push_back(load_checkpoint(p));
  }
  std::vector<EnsembleMember> members;
  for (const auto& m : models) members.push_back({&m.params, m.config});
  const Ensemble ensemble(members);
  const Vocabulary vocab = load_vocab(run);
  if (vocab.size() != ensemble.vocab_size()) throw ConfigError("checkpoint vocabulary does not match vocab.json");
  const std::string split = run.get("decode.split");
  const auto images = encode_dataset(load_split(run, split), vocab, models.front().config.max_len);
  DecodeOutcome o;
  o.decoded = decode_split(ensemble, images, decode_config(run), run.get_bool("decode.greedy"));
  std::vector<std::vector<IdSeq>> refs;
  for (const auto& img : images) refs.push_back(img.refs);
  o.report = score_decoded(o.decoded, refs, parse_cider_variant(run.get("score.variant")));
  o.output = run_layout::decode_output(run);
  save_decoded(o.decoded, vocab, o.output);
  out << "decoded " << o.decoded.size() << " " << split << " images with " << models.size() << " model"
      << (models.size() == 1 ? "" : "s") << " -> " << o.output.string() << "\n";
  out << format_report(o.report);
  return o;
}

EvalReport cmd_score(const RunConfig& run, std::ostream& out) {
  begin(run, "score");
  fs::path records = run.get("score.records");
  if (records.empty()) records = run_layout::decode_output(run);
  if (!fs::exists(records)) throw DatasetError("missing decode records " + records.string());
  const EvalReport r = score_records(load_decoded(records), load_split(run, run.get("decode.split")),
                                     parse_cider_variant(run.get("score.variant")));
  out << format_report(r);
  return r;
}

GradCheckReport gradcheck_instance(double lambda, Activation af, std::uint64_t seed, double tolerance) {
  PrecisionScope f64(Precision::kFloat64);
  ModelConfig c;
  c.d_model = 8;
  c.d_k = c.d_v = 4;
  c.heads = 2;
  c.d_ff = 16;
  c.layers = 1;
  c.dropout = 0.0;
  c.lambda = lambda;
  c.af = af;
  c.max_len = 4;
  c.feature_dim = 6;
  c.vocab_size = 11;
  Rng rng(seed);
  ParameterSet params = ParameterSet::initialize(c, rng);
  std::normal_distribution<double> g(0.0, 0.1);
  for (Tensor& t : params.tensors()) {
    if (t.rank() == 1) {
      for (double& v : t.mutable_values()) v += g(rng);
    }
  }
  std::vector<double> feats(3 * c.feature_dim);
  for (double& v : feats) v = std::normal_distribution<double>(0.0, 1.0)(rng);
  const Tensor features = Tensor::from_values({3, c.feature_dim}, feats);
  const BiCaptionPair pair = make_pair_from_targets({4, 7, 3, kEosId}, {9, 5, kEosId}, c.vocab_size);
  auto loss = [&] {
    const Tensor ctx = encode(features, params, c);
    return joint_xe_loss(decode_train(ctx, pair, params, c), pair);
  };
  return grad_check(loss, params.tensors(), tolerance);
}

GradcheckOutcome cmd_gradcheck(const RunConfig& run, std::ostream& out) {
  begin(run, "gradcheck");
  const double tol = run.get_double("gradcheck.tolerance");
  const double lambda = run.get_double("model.lambda");
  GradcheckOutcome o;
  o.passed = true;
  for (Activation af : {Activation::kRelu, Activation::kTanh}) {
    const std::string name = "joint-xe lambda=" + std::to_string(lambda) + " af=" + to_string(af);
    GradCheckReport r = gradcheck_instance(lambda, af, run.get_size("seed") + 17, tol);
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-40s %s  max rel %.3e  max abs %.3e  (%zu elements, worst %s)\n", name.c_str(),
                  r.passed ? "PASS" : "FAIL", r.max_relative_error, r.max_abs_error, r.elements_checked,
                  r.worst.c_str());
    out << buf;
    o.passed = o.passed && r.passed;
    o.cases.emplace_back(name, std::move(r));
  }
  return o;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& run, std::ostream& out) {
  begin(run, "ablate");
  const ModelConfig probe = model_config(run, 16, 1);
  const Prepared data = prepare(run, probe.max_len);
  const Vocabulary& vocab = data.vocab;
  const auto test = encode_dataset(load_split(run, "test"), vocab, probe.max_len);
  std::vector<AblationRow> rows;
  std::vector<nlohmann::json> lines;
  for (const auto& lam : run.get_list("ablate.lambdas")) {
    for (const auto& afs : run.get_list("ablate.afs")) {
      RunConfig cell = run;
      cell.set("model.lambda", lam);
      cell.set("model.af", afs);
      const ModelConfig config = model_config(cell, vocab.size(), data.feature_dim);
      config.validate();
      const fs::path dir = run.run_dir() / "ablate" / (lam + "_" + afs);
      write_file_atomically(dir / "config" / "ablate-cell.cfg", cell.dump());
      log_info("ablation cell lambda=" + lam + " af=" + afs);
      run_xe(cell, config, data, dir);
      const LoadedCheckpoint best = load_checkpoint(dir / "checkpoints" / "xe_best.ckpt");
      AblationRow row{config.lambda, config.af,
                      evaluate(Ensemble::single(best.params, best.config), test, decode_config(run),
                               parse_cider_variant(run.get("score.variant")), run.get_bool("decode.greedy"))};
      lines.push_back({{"lambda", row.lambda},
                       {"af", to_string(row.af)},
                       {"bleu4", row.report.ensemble.bleu.at(3)},
                       {"cider", row.report.ensemble.cider},
                       {"cider_l2r", row.report.l2r.cider},
                       {"cider_r2l", row.report.r2l.cider}});
      rows.push_back(std::move(row));
    }
  }
  detail::write_jsonl(run.run_dir() / "ablate" / "summary.jsonl", lines);
  out << "lambda  AF     BLEU-4   CIDEr\n";
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-6g  %-5s  %6.1f  %6.1f\n", r.lambda, to_string(r.af).c_str(),
                  100 * r.report.ensemble.bleu.at(3), 100 * r.report.ensemble.cider);
    out << buf;
  }
  return rows;
}

}  // namespace cbt
