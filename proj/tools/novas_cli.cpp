#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "novas/harness/checkpoint.hpp"
#include "novas/harness/experiments.hpp"
#include "presets.hpp"

using novas::harness::ConfigError;
using novas::harness::RunConfig;
using nlohmann::json;

namespace {

struct ConfigFlags {
  std::string preset;
  std::string file;
  std::vector<std::string> sets;
  std::optional<std::int64_t> seed;
  std::optional<std::string> out;
  std::optional<std::int64_t> jobs;
  std::optional<std::string> resume;
  std::optional<std::string> checkpoint;
};

RunConfig preset(const std::string& name) {
  const auto& presets = builtin_presets();
  const auto it = presets.find(name);
  if (it == presets.end()) {
    std::string known;
    for (const auto& [k, v] : presets) known += (known.empty() ? "" : ", ") + k;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
  }
  return RunConfig::from_json(json::parse(it->second));
}

// Precedence, lowest first: schema defaults, preset, config file, dedicated
// flags, then --set assignments in command-line order.
RunConfig build(const ConfigFlags& f) {
  RunConfig cfg;
  if (!f.preset.empty()) cfg = preset(f.preset);
  if (!f.file.empty()) cfg.merge(RunConfig::load(f.file));
  if (f.seed) cfg.set("seed", *f.seed);
  if (f.out) cfg.set("output.dir", *f.out);
  if (f.jobs) cfg.set("jobs", *f.jobs);
  if (f.resume) cfg.set("resume", *f.resume);
  if (f.checkpoint) cfg.set("checkpoint", *f.checkpoint);
  for (const auto& s : f.sets) cfg.set(s);
  cfg.validate();
  return cfg;
}

void add_config_flags(CLI::App* cmd, ConfigFlags& f, bool training, bool evaluating) {
  cmd->add_option("-p,--preset", f.preset, "built-in preset (spen, spen-gd, cartpole, cartpole-reduced, portfolio, bench)");
  cmd->add_option("-c,--config", f.file, "JSON config file, applied over the preset");
  cmd->add_option("-s,--set", f.sets, "override: dotted.key=value (repeatable, applied last)");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("-o,--out", f.out, "output directory");
  cmd->add_option("-j,--jobs", f.jobs, "worker threads for evaluation rollouts");
  if (training) cmd->add_option("--resume", f.resume, "checkpoint to resume training from");
  if (evaluating) cmd->add_option("--checkpoint", f.checkpoint, "checkpoint to evaluate (default: <out>/checkpoint)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NOVAS: differentiable sampling-based optimization experiments"};
  app.require_subcommand(1);

  using Verb = json (*)(const RunConfig&, std::ostream&);
  const std::vector<std::tuple<std::string, std::string, Verb, bool, bool>> verbs{
      {"spen-train", "train an energy network on the 1-D regression task", novas::harness::spen_train, true, false},
      {"spen-eval-sweep", "test loss of a trained energy network across inner iteration counts",
       novas::harness::spen_eval_sweep, false, true},
      {"spen-landscape", "energy landscape and argmin trace of a trained energy network",
       novas::harness::spen_landscape, false, true},
      {"fbsde-train", "train the FBSDE controller (cartpole or portfolio)", novas::harness::fbsde_train, true, false},
      {"fbsde-eval", "test rollouts of a trained controller (and portfolio baselines)", novas::harness::fbsde_eval,
       false, true},
      {"bench", "NOVAS, CEM and gradient descent on the test-function suite", novas::harness::bench, false, false},
  };

  std::map<std::string, ConfigFlags> flags;
  std::map<std::string, Verb> handlers;
  for (const auto& [name, help, fn, training, evaluating] : verbs) {
    auto* cmd = app.add_subcommand(name, help);
    add_config_flags(cmd, flags[name], training, evaluating);
    handlers[name] = fn;
  }

  std::string run_target;
  auto* run_cmd = app.add_subcommand("run", "run a whole experiment: train, then evaluate");
  run_cmd->add_option("target", run_target, "preset name or config file")->required();
  add_config_flags(run_cmd, flags["run"], true, true);

  std::string checkpoint_path;
  auto* inspect = app.add_subcommand("inspect-checkpoint", "print a checkpoint's index as JSON");
  inspect->add_option("path", checkpoint_path, "checkpoint stem or sidecar")->required();

  app.add_subcommand("schema", "list every config key with its type, default and meaning");

  CLI11_PARSE(app, argc, argv);
  const std::string verb = app.get_subcommands().front()->get_name();

  try {
    if (verb == "inspect-checkpoint") {
      std::cout << novas::harness::inspect_checkpoint(checkpoint_path).dump(2) << '\n';
      return 0;
    }
    if (verb == "schema") {
      for (const auto& key : novas::harness::config_schema()) {
        std::cout << key.name << " = " << (key.fallback.is_null() ? "(required)" : key.fallback.dump()) << "  # "
                  << key.help << '\n';
      }
      return 0;
    }
    if (verb == "run") {
      auto& f = flags["run"];
      if (std::filesystem::exists(run_target)) {
        f.file = f.file.empty() ? run_target : f.file;
        if (f.file != run_target) throw ConfigError("give the config either as the target or with --config");
      } else {
        f.preset = run_target;
      }
      std::cout << novas::harness::run(build(f), std::cerr).dump(2) << '\n';
      return 0;
    }
    std::cout << handlers.at(verb)(build(flags[verb]), std::cerr).dump(2) << '\n';
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
