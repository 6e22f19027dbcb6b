#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "cbt/commands.hpp"

namespace {

enum Exit { kOk = 0, kInvalid = 1, kFailed = 2 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compact bidirectional transformer captioning toolkit"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"synth", "generate the synthetic corpus"},
      {"vocab", "build the vocabulary from the training captions"},
      {"train-xe", "joint cross-entropy training"},
      {"train-sc", "self-critical training from the best XE checkpoint"},
      {"decode", "beam/greedy decoding, optionally with a word-level ensemble"},
      {"score", "BLEU/CIDEr report for decode records"},
      {"gradcheck", "finite-difference gradient check in float64"},
      {"ablate", "lambda x activation sweep"},
  };

  std::string config_path;
  std::map<std::string, std::string> overrides;
  std::map<std::string, CLI::App*> commands;
  for (const Sub& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_path, "key = value configuration file");
    for (const auto& key : cbt::RunConfig::keys()) {
      sub->add_option_function<std::string>(
             "--" + key.name, [&overrides, name = key.name](const std::string& v) { overrides[name] = v; },
             key.help + " (default: " + (key.default_value.empty() ? "\"\"" : key.default_value) + ")")
          ->type_name("VALUE");
    }
    commands[s.name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    cbt::RunConfig run = config_path.empty() ? cbt::RunConfig() : cbt::RunConfig::from_file(config_path);
    for (const auto& [k, v] : overrides) run.set(k, v);
    run.validate();
    auto& out = std::cout;
    if (commands["synth"]->parsed()) cbt::cmd_synth(run, out);
    if (commands["vocab"]->parsed()) cbt::cmd_vocab(run, out);
    if (commands["train-xe"]->parsed()) cbt::cmd_train_xe(run, out);
    if (commands["train-sc"]->parsed()) cbt::cmd_train_sc(run, out);
    if (commands["decode"]->parsed()) cbt::cmd_decode(run, out);
    if (commands["score"]->parsed()) cbt::cmd_score(run, out);
    if (commands["gradcheck"]->parsed() && !cbt::cmd_gradcheck(run, out).passed) return kFailed;
    if (commands["ablate"]->parsed()) cbt::cmd_ablate(run, out);
  } catch (const cbt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
  return kOk;
}
