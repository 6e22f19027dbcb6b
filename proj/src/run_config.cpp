#include "cbt/run_config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace cbt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<RunConfig::Key>& RunConfig::keys() {
  static const std::vector<Key> k = {
      {"run_dir", "runs/default", "directory holding data, vocabulary, checkpoints, logs and decodes"},
      {"seed", "0", "seed for corpus generation, initialization, pairing, dropout and sampling"},
      {"log_level", "info", "quiet, warn or info"},

      {"synth.seed", "0", "seed of the synthetic corpus, independent of the training seed"},
      {"synth.train_images", "1600", "synthetic training images"},
      {"synth.val_images", "200", "synthetic validation images"},
      {"synth.test_images", "200", "synthetic test images"},
      {"synth.regions", "6", "region vectors per image"},
      {"synth.feature_dim", "32", "region feature width"},
      {"synth.objects", "8", "object classes"},
      {"synth.colors", "6", "color classes"},
      {"synth.scenes", "6", "scene classes"},
      {"synth.max_count", "3", "largest object count"},
      {"synth.refs_per_image", "5", "reference captions per image"},
      {"synth.templates", "5", "caption templates the references are drawn from"},
      {"synth.noise", "0.3", "feature noise relative to the attribute directions"},

      {"vocab.min_count", "5", "drop words seen fewer times in the training captions"},

      {"model.d_model", "512", "model width"},
      {"model.d_k", "64", "per-head query/key width"},
      {"model.d_v", "64", "per-head value width"},
      {"model.d_ff", "2048", "feed-forward inner width"},
      {"model.layers", "6", "encoder and decoder layers"},
      {"model.heads", "8", "attention heads"},
      {"model.dropout", "0.1", "dropout probability"},
      {"model.lambda", "0.1", "weight of the cross-flow attention term"},
      {"model.af", "relu", "activation on the cross-flow term: relu or tanh"},
      {"model.max_len", "16", "content tokens per caption"},

      {"train.batch_size", "10", "images per update"},
      {"train.xe_epochs", "15", "cross-entropy epochs"},
      {"train.base_lr", "5e-4", "peak learning rate of the warmup schedule"},
      {"train.warmup_steps", "20000", "warmup steps"},
      {"train.ss_increment", "0.05", "scheduled sampling increment"},
      {"train.ss_every", "5", "epochs between scheduled sampling increments"},
      {"train.ss_max", "0.25", "scheduled sampling cap"},
      {"train.xe_reduction", "mean", "mean (per non-pad token) or sum"},
      {"train.xe_flows", "both", "flows in the XE loss: both, l2r or r2l"},
      {"train.sc_epochs", "15", "self-critical epochs"},
      {"train.sc_lr", "1e-5", "self-critical learning rate"},
      {"train.samples", "5", "sampled captions per flow and image"},
      {"train.sc_max_len", "17", "sampled tokens per caption, eos included"},
      {"train.sample_temperature", "1", "sampling temperature; 0 is greedy"},
      {"train.reward", "cider", "cider or cider-d"},
      {"train.adam_beta1", "0.9", "Adam beta1"},
      {"train.adam_beta2", "0.98", "Adam beta2"},
      {"train.adam_eps", "1e-9", "Adam epsilon"},
      {"train.clip_norm", "5", "global gradient norm cap; 0 disables"},
      {"train.val_images", "0", "validation images scored per epoch; 0 is all"},
      {"train.resume", "true", "continue from the last saved epoch when present"},
      {"train.init_checkpoint", "", "SC starting weights; default <run_dir>/checkpoints/xe_best.ckpt"},

      {"decode.total_beam", "4", "beams over both flows"},
      {"decode.max_len", "17", "generated tokens, eos included"},
      {"decode.length_norm", "none", "none or average"},
      {"decode.greedy", "false", "greedy decoding instead of beam search"},
      {"decode.split", "test", "train, val or test"},
      {"decode.checkpoints", "", "comma-separated checkpoints; several form a word-level ensemble"},
      {"decode.output", "", "decode records; default <run_dir>/decode/<split>.jsonl"},

      {"score.records", "", "decode records to score; default the decode output"},
      {"score.variant", "cider", "cider or cider-d"},

      {"gradcheck.tolerance", "1e-4", "maximum relative error"},

      {"ablate.lambdas", "0,0.1,0.4", "lambda values to sweep"},
      {"ablate.afs", "relu,tanh", "activations to sweep"},
  };
  return k;
}

RunConfig::RunConfig() {
  for (const auto& k : keys()) values_[k.name] = k.default_value;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  RunConfig rc;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      rc.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rc;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::size_t RunConfig::get_size(const std::string& key) const {
  const std::string& v = get(key);
  std::size_t used = 0;
  unsigned long long n = 0;
  try {
    if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
    n = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + " must be a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(n);
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(d)) throw ConfigError(key + " must be a number, got '" + v + "'");
  return d;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + " must be true or false, got '" + v + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream s(get(key));
  std::string item;
  while (std::getline(s, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& k : keys()) out += k.name + " = " + get(k.name) + "\n";
  return out;
}

void RunConfig::validate() const {
  get_size("seed");
  get_size("synth.seed");
  const std::string& level = get("log_level");
  if (level != "quiet" && level != "warn" && level != "info") throw ConfigError("log_level must be quiet, warn or info");
  if (get("run_dir").empty()) throw ConfigError("run_dir must not be empty");
  get_size("vocab.min_count");
  synth_spec(*this).validate();
  model_config(*this, 16, get_size("synth.feature_dim")).validate();
  train_config(*this).validate();
  decode_config(*this).validate();
  get_bool("train.resume");
  get_bool("decode.greedy");
  const std::string& split = get("decode.split");
  if (split != "train" && split != "val" && split != "test") throw ConfigError("decode.split must be train, val or test");
  parse_cider_variant(get("score.variant"));
  if (!(get_double("gradcheck.tolerance") > 0.0)) throw ConfigError("gradcheck.tolerance must be positive");
  for (const auto& l : get_list("ablate.lambdas")) {
    RunConfig probe = *this;
    probe.set("model.lambda", l);
    probe.get_double("model.lambda");
  }
  for (const auto& a : get_list("ablate.afs")) parse_activation(a);
}

ModelConfig model_config(const RunConfig& run, std::size_t vocab_size, std::size_t feature_dim) {
  ModelConfig c;
  c.d_model = run.get_size("model.d_model");
  c.d_k = run.get_size("model.d_k");
  c.d_v = run.get_size("model.d_v");
  c.d_ff = run.get_size("model.d_ff");
  c.layers = run.get_size("model.layers");
  c.heads = run.get_size("model.heads");
  c.dropout = run.get_double("model.dropout");
  c.lambda = run.get_double("model.lambda");
  c.af = parse_activation(run.get("model.af"));
  c.max_len = run.get_size("model.max_len");
  c.feature_dim = feature_dim;
  c.vocab_size = vocab_size;
  return c;
}

TrainConfig train_config(const RunConfig& run) {
  TrainConfig t;
  t.batch_size = run.get_size("train.batch_size");
  t.xe_epochs = run.get_size("train.xe_epochs");
  t.base_lr = run.get_double("train.base_lr");
  t.warmup_steps = run.get_size("train.warmup_steps");
  t.ss_increment = run.get_double("train.ss_increment");
  t.ss_every = run.get_size("train.ss_every");
  t.ss_max = run.get_double("train.ss_max");
  const std::string& red = run.get("train.xe_reduction");
  if (red != "mean" && red != "sum") throw ConfigError("train.xe_reduction must be mean or sum");
  t.xe_reduction = red == "mean" ? Reduction::kMean : Reduction::kSum;
  t.xe_flows = parse_flow_selection(run.get("train.xe_flows"));
  t.sc_epochs = run.get_size("train.sc_epochs");
  t.sc_lr = run.get_double("train.sc_lr");
  t.samples = run.get_size("train.samples");
  t.sc_max_len = run.get_size("train.sc_max_len");
  t.sample_temperature = run.get_double("train.sample_temperature");
  t.reward = parse_cider_variant(run.get("train.reward"));
  t.adam.beta1 = run.get_double("train.adam_beta1");
  t.adam.beta2 = run.get_double("train.adam_beta2");
  t.adam.eps = run.get_double("train.adam_eps");
  t.adam.clip_norm = run.get_double("train.clip_norm");
  t.val_images = run.get_size("train.val_images");
  t.val_max_len = run.get_size("decode.max_len");
  return t;
}

DecodeConfig decode_config(const RunConfig& run) {
  DecodeConfig d;
  d.total_beam = run.get_size("decode.total_beam");
  d.max_len = run.get_size("decode.max_len");
  d.length_norm = parse_length_norm(run.get("decode.length_norm"));
  return d;
}

SynthSpec synth_spec(const RunConfig& run) {
  SynthSpec s;
  s.train_images = run.get_size("synth.train_images");
  s.val_images = run.get_size("synth.val_images");
  s.test_images = run.get_size("synth.test_images");
  s.regions = run.get_size("synth.regions");
  s.feature_dim = run.get_size("synth.feature_dim");
  s.objects = run.get_size("synth.objects");
  s.colors = run.get_size("synth.colors");
  s.scenes = run.get_size("synth.scenes");
  s.max_count = run.get_size("synth.max_count");
  s.refs_per_image = run.get_size("synth.refs_per_image");
  s.templates = run.get_size("synth.templates");
  s.noise = run.get_double("synth.noise");
  return s;
}

}  // namespace cbt
