#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tkg/app/app.hpp"
#include "tkg/core/error.hpp"
#include "tkg/core/synthetic.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::string> out;
  std::optional<std::string> seed;
  std::optional<std::string> dataset;
  std::optional<std::string> model;
  std::optional<std::string> retrieval;
  std::optional<std::string> history_budget;
  std::optional<std::string> k;
  std::optional<std::string> adapter;
  std::optional<std::string> fusion;
  std::optional<std::string> gate;
  std::optional<std::string> generation;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("-c,--config", f.config, "experiment config file (key = value lines)");
  cmd->add_option("--set", f.sets, "override one key, key=value (repeatable, applied last)");
  cmd->add_option("--out", f.out, "experiment directory (key: output)");
  cmd->add_option("--seed", f.seed, "random seed (key: seed)");
  cmd->add_option("--dataset", f.dataset, "dataset directory (key: dataset)");
}

std::string key_help() {
  std::string out = "\nConfiguration keys (config file, --set key=value):\n";
  for (const auto& k : tkg::app::config_keys()) {
    std::string name(k.name);
    std::string def = k.default_value.empty() ? "\"\"" : std::string(k.default_value);
    out += "  " + name + std::string(name.size() < 30 ? 30 - name.size() : 1, ' ') + std::string(k.help) +
           " [" + def + "]\n";
  }
  out += "\nExit codes: 0 ok, 2 usage, 3 missing artifact, 4 data error.\n";
  return out;
}

tkg::app::ExperimentConfig resolve(const CommonFlags& f) {
  auto cfg = f.config.empty() ? tkg::app::ExperimentConfig{} : tkg::app::ExperimentConfig::load(f.config);
  auto apply = [&](const char* key, const std::optional<std::string>& v) {
    if (v) cfg.set(key, *v);
  };
  apply("output", f.out);
  apply("seed", f.seed);
  apply("dataset", f.dataset);
  apply("model", f.model);
  apply("retrieval", f.retrieval);
  apply("retrieval.history_budget", f.history_budget);
  apply("k", f.k);
  apply("adapter", f.adapter);
  apply("fusion", f.fusion);
  apply("gate", f.gate);
  apply("generation", f.generation);
  for (const auto& s : f.sets) cfg.set_assignment(s);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal knowledge graph forecasting with adapter-refined language model predictions", "tkgr"};
  app.require_subcommand(1);
  app.footer(key_help());

  CommonFlags flags;
  auto* mine = app.add_subcommand("mine", "mine cyclic temporal rules from the training history");
  add_common(mine, flags);

  auto* precompute = app.add_subcommand("precompute", "cache the language model's top-K entity candidates");
  add_common(precompute, flags);
  precompute->add_option("--model", flags.model, "backend spec, scripted:<path.json> (key: model)");
  precompute->add_option("--retrieval", flags.retrieval, "entity_key | rule_based (key: retrieval)");
  precompute->add_option("--history-budget", flags.history_budget, "facts per prompt (key: retrieval.history_budget)");
  precompute->add_option("--k", flags.k, "candidates per query (key: k)");
  precompute->add_option("--generation", flags.generation, "beam | iterative (key: generation)");

  auto* train = app.add_subcommand("train", "train an adapter and gate against the beam cache");
  add_common(train, flags);
  train->add_option("--model", flags.model, "backend spec the cache was built with (key: model)");
  train->add_option("--adapter", flags.adapter, "rule | gnn (key: adapter)");
  train->add_option("--fusion", flags.fusion, "mixture | product (key: fusion)");
  train->add_option("--gate", flags.gate, "mlp | fixed | auto (key: gate)");

  std::string mode = "full";
  std::string split = "test";
  bool dump_ranks = false;
  auto* eval = app.add_subcommand("eval", "evaluate one system and write reports/<mode>_<split>.{json,txt}");
  add_common(eval, flags);
  eval->add_option("--mode", mode, "full | no_bsl | no_adapter | adapter_only | tlogic_static")->capture_default_str();
  eval->add_option("--split", split, "train | valid | test")->capture_default_str();
  eval->add_flag("--dump-ranks", dump_ranks, "also write per-query ranks as JSON lines");
  eval->add_option("--model", flags.model, "backend spec the cache was built with (key: model)");
  eval->add_option("--adapter", flags.adapter, "rule | gnn (key: adapter)");
  eval->add_option("--fusion", flags.fusion, "mixture | product (key: fusion)");
  eval->add_option("--gate", flags.gate, "mlp | fixed | auto (key: gate)");

  auto* report = app.add_subcommand("report", "collect all reports into one table");
  add_common(report, flags);

  tkg::SyntheticConfig synth_cfg;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "write a synthetic recurrence dataset");
  synth->add_option("--out", synth_out, "target directory")->required();
  synth->add_option("--entities", synth_cfg.entities)->capture_default_str();
  synth->add_option("--relations", synth_cfg.relations)->capture_default_str();
  synth->add_option("--timesteps", synth_cfg.timesteps)->capture_default_str();
  synth->add_option("--fire", synth_cfg.fire_probability, "per-snapshot event probability")->capture_default_str();
  synth->add_option("--switch", synth_cfg.switch_probability, "per-event object change probability")
      ->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) {
      tkg::write_dataset_dir(tkg::make_recurrence_facts(synth_cfg), synth_cfg.entities, synth_cfg.relations, synth_out);
      std::cerr << "wrote " << synth_out << "\n";
      return 0;
    }
    const auto cfg = resolve(flags);
    if (mine->parsed()) tkg::app::cmd_mine(cfg, std::cerr);
    if (precompute->parsed()) tkg::app::cmd_precompute(cfg, std::cerr);
    if (train->parsed()) tkg::app::cmd_train(cfg, std::cerr);
    if (eval->parsed()) {
      tkg::app::cmd_eval(cfg, tkg::eval::parse_ablation_mode(mode), tkg::parse_split_name(split), dump_ranks,
                         std::cout);
    }
    if (report->parsed()) tkg::app::cmd_report(cfg, std::cout);
  } catch (const tkg::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const tkg::MissingArtifactError& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return 3;
  } catch (const tkg::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
