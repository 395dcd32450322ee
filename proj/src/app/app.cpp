#include "tkg/app/app.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "tkg/adapters/adapter.hpp"
#include "tkg/core/error.hpp"
#include "tkg/core/hash.hpp"
#include "tkg/fusion/train.hpp"
#include "tkg/lm/cache.hpp"
#include "tkg/rules/mining.hpp"

namespace tkg::app {

namespace {

constexpr std::array kKeys{
    ConfigKey{"dataset", "", "directory with train.txt, valid.txt, test.txt and optional stat.txt"},
    ConfigKey{"interval", "1", "raw timestamp units per snapshot (24 for daily ICEWS hour stamps)"},
    ConfigKey{"inverse", "true", "add inverse queries (o, r^-1, ?, t)"},
    ConfigKey{"relation_names", "", "optional id<TAB>name file for prompt relation strings"},
    ConfigKey{"output", "experiment", "experiment directory (rules/, cache/, ckpt/, reports/)"},
    ConfigKey{"seed", "1", "seed for rule mining, parameter initialisation and batch order"},
    ConfigKey{"mine.walks_per_length", "200", "walk attempts per head relation and body length"},
    ConfigKey{"mine.max_body_len", "3", "longest rule body"},
    ConfigKey{"mine.walk_decay", "0.1", "walk transition weight exp(-decay * dt)"},
    ConfigKey{"mine.confidence_samples", "1000", "body groundings used per confidence estimate"},
    ConfigKey{"grounding.window", "0", "snapshots searched before the query (0: all history)"},
    ConfigKey{"grounding.cap", "1000", "groundings kept per query and rule, most recent first"},
    ConfigKey{"retrieval", "entity_key", "prompt history retrieval: entity_key | rule_based"},
    ConfigKey{"retrieval.history_budget", "50", "facts per prompt"},
    ConfigKey{"retrieval.min_rule_confidence", "0", "rule_based retrieval: confidence threshold"},
    ConfigKey{"prompt.parenthesized", "false", "render facts as t:[(s,r,o)] instead of t:[s,r,o]"},
    ConfigKey{"model", "", "language model backend, scripted:<path.json>"},
    ConfigKey{"generation", "beam", "candidate generation for precompute: beam | iterative"},
    ConfigKey{"k", "20", "candidates kept per query"},
    ConfigKey{"max_len", "0", "generation length cap in tokens (0: digits of the largest id plus stop)"},
    ConfigKey{"softmax", "logprob", "turning candidate scores into P_llm: logprob | probability"},
    ConfigKey{"adapter", "rule", "adapter: rule | gnn"},
    ConfigKey{"adapter.dim", "64", "relation embedding size"},
    ConfigKey{"adapter.lambda", "0.1", "rule adapter recency decay (fixed)"},
    ConfigKey{"adapter.similarity", "cosine", "rule adapter similarity: cosine | dot"},
    ConfigKey{"gnn.hidden", "64", "edge perceptron hidden size"},
    ConfigKey{"gnn.hops", "2", "expansion hops L"},
    ConfigKey{"gnn.prune_budget", "50", "nodes kept per hop M"},
    ConfigKey{"gnn.neighbor_cap", "30", "most recent prior events per node S"},
    ConfigKey{"gnn.scoring", "normalize", "entity scores from attention: normalize | softmax"},
    ConfigKey{"gnn.relation_prior", "true", "add the query/edge relation embedding dot product to edge logits"},
    ConfigKey{"fusion", "mixture", "fusion: mixture | product"},
    ConfigKey{"fusion.epsilon", "1e-6", "product fusion smoothing"},
    ConfigKey{"gate", "auto", "gate: mlp | fixed | auto (fixed for rule, mlp for gnn)"},
    ConfigKey{"gate.hidden", "32", "gate perceptron hidden size"},
    ConfigKey{"epochs", "5", "training epochs"},
    ConfigKey{"lr", "1e-4", "Adam learning rate"},
    ConfigKey{"batch_size", "128", "queries per update"},
    ConfigKey{"static.lambda", "0.1", "tlogic_static recency decay"},
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string hash_of(const std::vector<std::string>& parts) {
  std::uint64_t h = fnv1a("tkg");
  for (const auto& p : parts) {
    h = fnv1a(p, h);
    h = fnv1a(std::string_view("\x1f", 1), h);
  }
  return to_hex(h);
}

std::string keyed(const ExperimentConfig& c, std::initializer_list<const char*> keys) {
  std::string out;
  for (const auto* k : keys) out += std::string(k) + "=" + c.str(k) + ";";
  return out;
}

std::string model_identity(const std::string& spec) {
  constexpr std::string_view scripted = "scripted:";
  if (spec.starts_with(scripted)) {
    const auto path = spec.substr(scripted.size());
    return "scripted:" + std::filesystem::path(path).filename().string() + "#" + file_hash(path);
  }
  return spec;
}

std::string read_meta_hash(const std::string& meta_json) {
  if (meta_json.empty()) return {};
  const auto j = nlohmann::json::parse(meta_json, nullptr, false);
  if (j.is_discarded() || !j.contains("config_hash")) return {};
  return j["config_hash"].get<std::string>();
}

rules::LoadedRules load_rules_checked(const std::filesystem::path& path, const std::string& expected) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("missing rule store " + path.string() + " (run mine)");
  auto loaded = rules::read_rules(in);
  const auto got = read_meta_hash(loaded.meta_json);
  if (got != expected) {
    throw MissingArtifactError("rule store " + path.string() + " was mined with config " + got + ", expected " +
                               expected + " (run mine)");
  }
  return loaded;
}

lm::DistributionCache load_cache_checked(const std::filesystem::path& path, const std::string& expected) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError("missing cache " + path.string() + " (run precompute)");
  auto cache = lm::DistributionCache::load(path);
  if (cache.meta().config_hash != expected) {
    throw MissingArtifactError("cache " + path.string() + " was built with config " + cache.meta().config_hash +
                               ", expected " + expected + " (run precompute)");
  }
  return cache;
}

adapters::GateKind gate_kind(const ExperimentConfig& c) {
  const auto& g = c.str("gate");
  if (g == "auto") {
    return adapters::parse_adapter_kind(c.str("adapter")) == adapters::AdapterKind::rule
               ? adapters::GateKind::fixed_half
               : adapters::GateKind::mlp;
  }
  return adapters::parse_gate_kind(g);
}

rules::GroundingConfig grounding_config(const ExperimentConfig& c) {
  rules::GroundingConfig g;
  g.window = static_cast<Time>(c.integer("grounding.window"));
  g.cap_per_rule = c.count("grounding.cap");
  return g;
}

std::unique_ptr<adapters::Adapter> make_adapter(const ExperimentConfig& c, const TemporalKG& graph,
                                                const rules::RuleStore* store) {
  const auto seed = static_cast<std::uint64_t>(c.integer("seed"));
  if (adapters::parse_adapter_kind(c.str("adapter")) == adapters::AdapterKind::rule) {
    adapters::RuleAdapterConfig rc;
    rc.dim = c.count("adapter.dim");
    rc.lambda = c.real("adapter.lambda");
    rc.similarity = adapters::parse_similarity(c.str("adapter.similarity"));
    rc.grounding = grounding_config(c);
    rc.seed = seed;
    return std::make_unique<adapters::RuleAdapter>(graph, *store, rc);
  }
  adapters::GnnAdapterConfig gc;
  gc.dim = c.count("adapter.dim");
  gc.hidden = c.count("gnn.hidden");
  gc.hops = c.count("gnn.hops");
  gc.prune_budget = c.count("gnn.prune_budget");
  gc.neighbor_cap = c.count("gnn.neighbor_cap");
  gc.scoring = adapters::parse_gnn_scoring(c.str("gnn.scoring"));
  gc.relation_prior = c.boolean("gnn.relation_prior");
  gc.seed = seed;
  return std::make_unique<adapters::GnnAdapter>(graph, gc);
}

fusion::FusionConfig fusion_config(const ExperimentConfig& c) {
  fusion::FusionConfig f;
  f.mode = fusion::parse_fusion_mode(c.str("fusion"));
  f.epsilon = c.real("fusion.epsilon");
  return f;
}

prompt::RelationLexicon lexicon_for(const ExperimentConfig& c, const TemporalKG& graph) {
  const auto& names = c.str("relation_names");
  if (names.empty()) return prompt::RelationLexicon::numbered(graph.relation_count());
  return prompt::RelationLexicon::load(names, graph.relation_count());
}

bool needs_rules_for_training(const ExperimentConfig& c) {
  return adapters::parse_adapter_kind(c.str("adapter")) == adapters::AdapterKind::rule;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::span<const ConfigKey> config_keys() { return kKeys; }

ExperimentConfig::ExperimentConfig() {
  for (const auto& k : kKeys) values_[std::string(k.name)] = std::string(k.default_value);
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  ExperimentConfig c;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    c.set(trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)));
  }
  return c;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (!values_.contains(key)) throw UsageError("unknown config key '" + key + "'");
  values_[key] = value;
}

void ExperimentConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError("expected key=value, got '" + assignment + "'");
  set(trim(std::string_view(assignment).substr(0, eq)), trim(std::string_view(assignment).substr(eq + 1)));
}

const std::string& ExperimentConfig::str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  return it->second;
}

long long ExperimentConfig::integer(const std::string& key) const {
  const auto& s = str(key);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw UsageError(key + " must be an integer, got '" + s + "'");
  return v;
}

std::size_t ExperimentConfig::count(const std::string& key) const {
  const auto v = integer(key);
  if (v < 0) throw UsageError(key + " must be non-negative");
  return static_cast<std::size_t>(v);
}

double ExperimentConfig::real(const std::string& key) const {
  const auto& s = str(key);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw UsageError(key + " must be a number, got '" + s + "'");
  return v;
}

bool ExperimentConfig::boolean(const std::string& key) const {
  const auto& s = str(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw UsageError(key + " must be true or false, got '" + s + "'");
}

std::string ExperimentConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

StageHashes stage_hashes(const ExperimentConfig& c) {
  const std::filesystem::path dir = c.str("dataset");
  if (dir.empty()) throw UsageError("no dataset given (set dataset=<dir>)");
  if (!std::filesystem::is_directory(dir)) throw UsageError("dataset directory " + dir.string() + " does not exist");
  std::vector<std::string> data_parts{keyed(c, {"interval", "inverse"})};
  for (const char* f : {"train.txt", "valid.txt", "test.txt", "stat.txt"}) {
    const auto p = dir / f;
    data_parts.push_back(std::filesystem::exists(p) ? file_hash(p.string()) : "-");
  }
  StageHashes h;
  h.data = hash_of(data_parts);
  h.mine = hash_of({h.data, keyed(c, {"mine.walks_per_length", "mine.max_body_len", "mine.walk_decay",
                                      "mine.confidence_samples", "seed"})});
  const bool rule_retrieval = retrieval::parse_strategy(c.str("retrieval")) == retrieval::Strategy::rule_based;
  const auto model = c.str("model").empty() ? std::string("-") : model_identity(c.str("model"));
  auto precompute = [&](std::string_view generation) {
    std::string relation_names = "-";
    if (!c.str("relation_names").empty()) relation_names = file_hash(c.str("relation_names"));
    return hash_of({h.data, rule_retrieval ? h.mine : "-", model, relation_names,
                    keyed(c, {"retrieval", "retrieval.history_budget", "retrieval.min_rule_confidence",
                              "prompt.parenthesized", "k", "max_len"}),
                    std::string(generation)});
  };
  h.precompute_beam = precompute("beam");
  h.precompute_iterative = precompute("iterative");
  const bool rule_adapter = needs_rules_for_training(c);
  h.train = hash_of({h.precompute_beam, rule_adapter ? h.mine : "-",
                     keyed(c, {"adapter", "adapter.dim", "softmax", "fusion", "fusion.epsilon", "gate",
                               "gate.hidden", "epochs", "lr", "batch_size", "seed"}),
                     rule_adapter ? keyed(c, {"adapter.lambda", "adapter.similarity", "grounding.window",
                                              "grounding.cap"})
                                  : keyed(c, {"gnn.hidden", "gnn.hops", "gnn.prune_budget", "gnn.neighbor_cap",
                                              "gnn.scoring", "gnn.relation_prior"})});
  return h;
}

std::filesystem::path ExperimentPaths::report(std::string_view mode, std::string_view split,
                                              std::string_view ext) const {
  return root / "reports" / (std::string(mode) + "_" + std::string(split) + std::string(ext));
}

Dataset load_experiment_dataset(const ExperimentConfig& c) {
  const std::filesystem::path dir = c.str("dataset");
  if (dir.empty()) throw UsageError("no dataset given (set dataset=<dir>)");
  if (!std::filesystem::is_directory(dir)) throw UsageError("dataset directory " + dir.string() + " does not exist");
  LoadOptions opts;
  opts.interval = c.integer("interval");
  opts.inverse = c.boolean("inverse");
  return load_dataset(dir, opts);
}

void cmd_mine(const ExperimentConfig& c, std::ostream& log) {
  const auto hashes = stage_hashes(c);
  const auto dataset = load_experiment_dataset(c);
  rules::MiningConfig mc;
  mc.walks_per_length = c.count("mine.walks_per_length");
  mc.max_body_len = c.count("mine.max_body_len");
  mc.walk_decay = c.real("mine.walk_decay");
  mc.confidence_samples = c.count("mine.confidence_samples");
  mc.seed = static_cast<std::uint64_t>(c.integer("seed"));
  rules::MiningStats stats;
  const auto store = rules::mine_rules(dataset.graph.history_before(dataset.split.train_end()), mc, &stats);
  if (stats.empty_graph) log << "warning: training history is empty, no rules mined\n";

  const ExperimentPaths paths{c.output_dir()};
  std::filesystem::create_directories(paths.rules().parent_path());
  nlohmann::ordered_json meta;
  meta["config_hash"] = hashes.mine;
  meta["stage"] = "mine";
  {
    std::ofstream out(paths.rules(), std::ios::binary | std::ios::trunc);
    rules::write_rules(store, out, meta.dump());
    if (!out) throw Error("cannot write " + paths.rules().string());
  }
  nlohmann::ordered_json st;
  st["config_hash"] = hashes.mine;
  st["rules"] = store.size();
  st["walks_attempted"] = stats.walks_attempted;
  st["walks_closed"] = stats.walks_closed;
  st["candidate_rules"] = stats.candidate_rules;
  nlohmann::ordered_json per_head = nlohmann::ordered_json::object();
  for (const auto& [head, n] : stats.rules_per_head) per_head[std::to_string(head)] = n;
  st["rules_per_head"] = per_head;
  std::array<std::size_t, 10> histogram{};
  for (const auto& r : store.rules()) {
    histogram[std::min<std::size_t>(9, static_cast<std::size_t>(r.confidence * 10.0))]++;
  }
  st["confidence_histogram"] = histogram;
  write_text(paths.mining_stats(), st.dump(2) + "\n");
  log << "mined " << store.size() << " rules over " << stats.rules_per_head.size() << " head relations -> "
      << paths.rules().string() << "\n";
}

void cmd_precompute(const ExperimentConfig& c, std::ostream& log) {
  const auto hashes = stage_hashes(c);
  const auto generation = lm::parse_generation(c.str("generation"));
  if (c.str("model").empty()) throw UsageError("no model given (set model=scripted:<path>)");
  const auto model = lm::make_model(c.str("model"));
  const auto dataset = load_experiment_dataset(c);
  const ExperimentPaths paths{c.output_dir()};

  lm::PrecomputeRequest req;
  req.model = model.get();
  req.graph = &dataset.graph;
  req.retrieval.strategy = retrieval::parse_strategy(c.str("retrieval"));
  req.retrieval.history_budget = c.count("retrieval.history_budget");
  req.retrieval.min_rule_confidence = c.real("retrieval.min_rule_confidence");
  req.prompt.parenthesized = c.boolean("prompt.parenthesized");
  req.generation = generation;
  req.k = c.count("k");
  req.max_len = c.count("max_len");
  if (req.max_len == 0) req.max_len = lm::default_max_len(dataset.graph.entity_count());
  std::optional<rules::LoadedRules> loaded;
  if (req.retrieval.strategy == retrieval::Strategy::rule_based) {
    loaded = load_rules_checked(paths.rules(), hashes.mine);
    req.rules = &loaded->store;
  }
  const auto lexicon = lexicon_for(c, dataset.graph);
  req.lexicon = &lexicon;

  const auto expected =
      generation == lm::Generation::beam ? hashes.precompute_beam : hashes.precompute_iterative;
  lm::CacheWriter writer(paths.cache(generation),
                         lm::CacheMeta{model->name(), expected, req.k, req.max_len, std::string(to_string(generation))});
  lm::PrecomputeStats total;
  for (const auto s : {SplitName::train, SplitName::valid, SplitName::test}) {
    const auto st = lm::precompute_cache(req, dataset.split.queries(s), writer);
    total.computed += st.computed;
    total.skipped += st.skipped;
    total.zero += st.zero;
  }
  log << "precompute (" << to_string(generation) << "): " << total.computed << " computed, " << total.skipped
      << " already cached, " << total.zero << " without any entity -> " << paths.cache(generation).string() << "\n";
}

void cmd_train(const ExperimentConfig& c, std::ostream& log) {
  const auto hashes = stage_hashes(c);
  const ExperimentPaths paths{c.output_dir()};
  std::vector<std::string> missing;
  if (!std::filesystem::exists(paths.cache(lm::Generation::beam))) missing.push_back("beam cache (run precompute)");
  if (needs_rules_for_training(c) && !std::filesystem::exists(paths.rules())) missing.push_back("rule store (run mine)");
  if (!missing.empty()) {
    std::string msg = "train is missing:";
    for (const auto& m : missing) msg += " " + m + ";";
    throw MissingArtifactError(msg);
  }
  const auto dataset = load_experiment_dataset(c);
  const auto cache = load_cache_checked(paths.cache(lm::Generation::beam), hashes.precompute_beam);
  std::optional<rules::LoadedRules> loaded;
  if (needs_rules_for_training(c)) loaded = load_rules_checked(paths.rules(), hashes.mine);

  auto adapter = make_adapter(c, dataset.graph, loaded ? &loaded->store : nullptr);
  adapters::Gate gate(gate_kind(c), *adapter, c.count("gate.hidden"), static_cast<std::uint64_t>(c.integer("seed")));
  fusion::TrainConfig tc;
  tc.epochs = c.count("epochs");
  tc.learning_rate = c.real("lr");
  tc.batch_size = c.count("batch_size");
  tc.seed = static_cast<std::uint64_t>(c.integer("seed"));
  tc.softmax = lm::parse_softmax_mode(c.str("softmax"));

  fusion::CheckpointTarget target;
  target.path = paths.checkpoint();
  target.header.kind = std::string(adapter->kind());
  target.header.config_hash = hashes.train;
  nlohmann::ordered_json meta;
  meta["cache"] = hashes.precompute_beam;
  meta["rules"] = loaded ? hashes.mine : "";
  meta["gate"] = std::string(to_string(gate.kind()));
  target.header.meta_json = meta.dump();
  const auto result = fusion::train_adapter(*adapter, gate, dataset, cache, tc, fusion_config(c), target);

  std::ostringstream csv;
  fusion::write_train_log(result.log, csv);
  write_text(paths.train_log(), csv.str());
  write_text(paths.frozen_config(), c.canonical());
  log << "trained " << adapter->kind() << " adapter; best epoch " << result.best_epoch << " (valid hits@3 "
      << result.best_valid_hits3 << ") -> " << paths.checkpoint().string() << "\n";
}

eval::MetricsReport cmd_eval(const ExperimentConfig& c, eval::AblationMode mode, SplitName split, bool dump_ranks,
                             std::ostream& log) {
  using eval::AblationMode;
  const auto hashes = stage_hashes(c);
  const ExperimentPaths paths{c.output_dir()};
  const bool beam = mode == AblationMode::full || mode == AblationMode::no_adapter;
  const bool iterative = mode == AblationMode::no_bsl;
  const bool adapter_needed =
      mode == AblationMode::full || mode == AblationMode::no_bsl || mode == AblationMode::adapter_only;
  const bool rules_needed = mode == AblationMode::tlogic_static || (adapter_needed && needs_rules_for_training(c));

  std::vector<std::string> missing;
  if (beam && !std::filesystem::exists(paths.cache(lm::Generation::beam))) {
    missing.push_back("beam cache " + paths.cache(lm::Generation::beam).string() + " (run precompute)");
  }
  if (iterative && !std::filesystem::exists(paths.cache(lm::Generation::iterative))) {
    missing.push_back("iterative cache " + paths.cache(lm::Generation::iterative).string() +
                      " (run precompute with generation=iterative)");
  }
  if (adapter_needed && !std::filesystem::exists(paths.checkpoint())) {
    missing.push_back("checkpoint " + paths.checkpoint().string() + " (run train)");
  }
  if (rules_needed && !std::filesystem::exists(paths.rules())) {
    missing.push_back("rule store " + paths.rules().string() + " (run mine)");
  }
  if (!missing.empty()) {
    std::string msg = "eval " + std::string(to_string(mode)) + " is missing:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw MissingArtifactError(msg);
  }

  const auto dataset = load_experiment_dataset(c);
  std::optional<lm::DistributionCache> beam_cache, iterative_cache;
  if (beam) beam_cache = load_cache_checked(paths.cache(lm::Generation::beam), hashes.precompute_beam);
  if (iterative) {
    iterative_cache = load_cache_checked(paths.cache(lm::Generation::iterative), hashes.precompute_iterative);
  }
  std::optional<rules::LoadedRules> loaded;
  if (rules_needed) loaded = load_rules_checked(paths.rules(), hashes.mine);

  std::unique_ptr<adapters::Adapter> adapter;
  std::unique_ptr<adapters::Gate> gate;
  if (adapter_needed) {
    const auto header = nn::read_checkpoint_header(paths.checkpoint());
    if (header.config_hash != hashes.train) {
      throw MissingArtifactError("checkpoint " + paths.checkpoint().string() + " was trained with config " +
                                 header.config_hash + ", expected " + hashes.train + " (run train)");
    }
    adapter = make_adapter(c, dataset.graph, loaded ? &loaded->store : nullptr);
    gate = std::make_unique<adapters::Gate>(gate_kind(c), *adapter, c.count("gate.hidden"),
                                            static_cast<std::uint64_t>(c.integer("seed")));
    nn::load_checkpoint(paths.checkpoint(), adapter->params());
  }

  eval::AblationInputs in;
  in.dataset = &dataset;
  in.beam_cache = beam_cache ? &*beam_cache : nullptr;
  in.iterative_cache = iterative_cache ? &*iterative_cache : nullptr;
  in.adapter = adapter.get();
  in.gate = gate.get();
  in.fusion = fusion_config(c);
  in.softmax = lm::parse_softmax_mode(c.str("softmax"));
  in.rules = loaded ? &loaded->store : nullptr;
  in.static_lambda = c.real("static.lambda");
  in.grounding = grounding_config(c);

  std::vector<eval::RankRecord> ranks;
  auto report = eval::run_ablation(mode, in, split, dump_ranks ? &ranks : nullptr);
  switch (mode) {
    case AblationMode::full: report.config_hash = hashes.train; break;
    case AblationMode::no_adapter: report.config_hash = hashes.precompute_beam; break;
    case AblationMode::no_bsl: report.config_hash = hash_of({hashes.train, hashes.precompute_iterative}); break;
    case AblationMode::adapter_only: report.config_hash = hash_of({hashes.train, "adapter_only"}); break;
    case AblationMode::tlogic_static:
      report.config_hash = hash_of({hashes.mine, keyed(c, {"static.lambda", "grounding.window", "grounding.cap"})});
      break;
  }
  write_text(paths.report(report.mode, report.split, ".json"), report.to_json());
  write_text(paths.report(report.mode, report.split, ".txt"), report.to_text());
  if (dump_ranks) {
    std::ostringstream out;
    eval::write_ranks(ranks, out);
    write_text(paths.report(report.mode, report.split, ".ranks.jsonl"), out.str());
  }
  log << report.to_text();
  return report;
}

void cmd_report(const ExperimentConfig& c, std::ostream& out) {
  const ExperimentPaths paths{c.output_dir()};
  const auto dir = paths.root / "reports";
  if (!std::filesystem::is_directory(dir)) throw MissingArtifactError("no reports in " + dir.string() + " (run eval)");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.path().extension() == ".json" && !name.ends_with(".ranks.jsonl")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw MissingArtifactError("no reports in " + dir.string() + " (run eval)");
  std::ostringstream table;
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %-6s %8s %8s %8s %8s  %s\n", "mode", "split", "queries", "hits@1", "hits@3",
                "hits@10", "config");
  table << line;
  for (const auto& f : files) {
    std::ifstream in(f);
    nlohmann::json j;
    try {
      in >> j;
      const auto& o = j.at("overall");
      std::snprintf(line, sizeof line, "%-14s %-6s %8zu %8.4f %8.4f %8.4f  %s\n",
                    j.at("mode").get<std::string>().c_str(), j.at("split").get<std::string>().c_str(),
                    o.at("queries").get<std::size_t>(), o.at("hits@1").get<double>(), o.at("hits@3").get<double>(),
                    o.at("hits@10").get<double>(), j.at("config_hash").get<std::string>().c_str());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(f.string() + ": " + e.what());
    }
    table << line;
  }
  write_text(dir / "summary.txt", table.str());
  out << table.str();
}

}  // namespace tkg::app
