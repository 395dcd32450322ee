#include "tkg/lm/cache.hpp"

#include <charconv>
#include <iterator>
#include <sstream>
#include <system_error>

#include <json.hpp>

#include "tkg/core/error.hpp"

namespace tkg::lm {

namespace {

std::string shortest(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw Error("cannot format log-probability");
  return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw DataError("bad log-probability '" + s + "'");
  return value;
}

std::string qid_hint(const std::string& line, std::size_t line_no) {
  const auto at = line.find("\"qid\":");
  if (at != std::string::npos) {
    std::size_t i = at + 6;
    while (i < line.size() && line[i] == ' ') ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] >= '0' && line[j] <= '9') ++j;
    if (j > i) return "query " + line.substr(i, j - i);
  }
  return "line " + std::to_string(line_no);
}

CacheMeta parse_meta(const nlohmann::json& m) {
  CacheMeta meta;
  meta.model = m.at("model").get<std::string>();
  meta.config_hash = m.at("config_hash").get<std::string>();
  meta.k = m.at("k").get<std::size_t>();
  meta.max_len = m.at("max_len").get<std::size_t>();
  meta.generation = m.at("generation").get<std::string>();
  return meta;
}

DistributionCache parse_cache(const std::string& content, const std::string& source) {
  std::istringstream in(content);
  std::string line;
  std::size_t line_no = 0;
  DistributionCache cache;
  bool have_meta = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      if (rec.contains("meta")) {
        if (have_meta) throw DataError("second metadata record");
        cache = DistributionCache(parse_meta(rec["meta"]));
        have_meta = true;
        continue;
      }
      if (!have_meta) throw DataError("record before the metadata record");
      std::vector<ScoredEntity> entries;
      for (const auto& pair : rec.at("entries")) {
        if (!pair.is_array() || pair.size() != 2) throw DataError("entry is not [entity, logprob]");
        entries.emplace_back(pair[0].get<EntityId>(), parse_double(pair[1].get<std::string>()));
      }
      const auto qid = rec.at("qid").get<QueryId>();
      if (cache.contains(qid)) throw DataError("duplicate record");
      cache.insert(qid, std::move(entries));
    } catch (const std::exception& e) {
      throw DataError(source + ": corrupted record for " + qid_hint(line, line_no) + ": " + e.what());
    }
  }
  if (!have_meta) throw DataError(source + ": missing metadata record");
  return cache;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open cache " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

std::string format_record(QueryId qid, std::span<const ScoredEntity> entries) {
  std::string out = "{\"qid\":" + std::to_string(qid) + ",\"entries\":[";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i) out += ',';
    out += '[' + std::to_string(entries[i].first) + ",\"" + shortest(entries[i].second) + "\"]";
  }
  out += "]}";
  return out;
}

std::string format_meta(const CacheMeta& meta) {
  nlohmann::ordered_json m;
  m["model"] = meta.model;
  m["config_hash"] = meta.config_hash;
  m["k"] = meta.k;
  m["max_len"] = meta.max_len;
  m["generation"] = meta.generation;
  nlohmann::ordered_json rec;
  rec["meta"] = m;
  return rec.dump();
}

DistributionCache DistributionCache::load(const std::filesystem::path& path) {
  const auto content = read_all(path);
  if (!content.empty() && content.back() != '\n') {
    const auto start = content.rfind('\n', content.size() - 1);
    const auto torn = content.substr(start == std::string::npos ? 0 : start + 1);
    throw DataError(path.string() + ": corrupted record for " + qid_hint(torn, 0) + ": truncated line");
  }
  return parse_cache(content, path.string());
}

const std::vector<ScoredEntity>& DistributionCache::entries(QueryId qid) const {
  const auto it = entries_.find(qid);
  if (it == entries_.end()) throw MissingArtifactError("cache has no entry for query " + std::to_string(qid));
  return it->second;
}

EntityDistribution DistributionCache::distribution(QueryId qid, SoftmaxMode mode) const {
  return build_entity_distribution(entries(qid), mode);
}

std::vector<QueryId> DistributionCache::missing(std::span<const Query> queries) const {
  std::vector<QueryId> out;
  for (const auto& q : queries) {
    if (!contains(q.id)) out.push_back(q.id);
  }
  return out;
}

void DistributionCache::insert(QueryId qid, std::vector<ScoredEntity> entries) {
  entries_[qid] = std::move(entries);
}

CacheWriter::CacheWriter(const std::filesystem::path& path, const CacheMeta& meta) {
  if (std::filesystem::exists(path)) {
    auto content = read_all(path);
    const auto keep = content.rfind('\n');
    const auto complete = keep == std::string::npos ? 0 : keep + 1;
    if (complete != content.size()) {
      content.resize(complete);
      std::filesystem::resize_file(path, complete);
    }
    if (content.empty()) {
      existing_ = DistributionCache(meta);
    } else {
      existing_ = parse_cache(content, path.string());
      if (!(existing_.meta() == meta)) {
        throw MissingArtifactError(path.string() + " was produced by a different configuration (hash " +
                                   existing_.meta().config_hash + ", expected " + meta.config_hash +
                                   "); refusing to append");
      }
    }
    out_.open(path, std::ios::binary | std::ios::app);
    if (content.empty()) out_ << format_meta(meta) << '\n' << std::flush;
  } else {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    existing_ = DistributionCache(meta);
    out_.open(path, std::ios::binary | std::ios::trunc);
    out_ << format_meta(meta) << '\n' << std::flush;
  }
  if (!out_) throw Error("cannot write cache " + path.string());
}

void CacheWriter::append(QueryId qid, std::span<const ScoredEntity> entries) {
  if (existing_.contains(qid)) return;
  out_ << format_record(qid, entries) << '\n' << std::flush;
  if (!out_) throw Error("cache write failed for query " + std::to_string(qid));
  existing_.insert(qid, {entries.begin(), entries.end()});
}

std::vector<ScoredEntity> generate_for_query(const PrecomputeRequest& request, const Query& query) {
  const auto& graph = *request.graph;
  const auto history = graph.history_before(query.time);
  const auto facts = retrieval::retrieve(history, query, request.retrieval, request.rules);
  const auto doc = prompt::render_prompt(facts, query, *request.lexicon, request.prompt);
  const auto max_len = request.max_len ? request.max_len : default_max_len(graph.entity_count());
  const auto result = request.generation == Generation::beam
                          ? beam_generate(*request.model, doc, request.k, max_len)
                          : iterative_generate(*request.model, doc, request.k, max_len);
  return map_sequences_to_entities(result, request.model->tokenizer(), graph.entity_count());
}

PrecomputeStats precompute_cache(const PrecomputeRequest& request, std::span<const Query> queries,
                                 CacheWriter& writer) {
  if (!request.model || !request.graph || !request.lexicon) {
    throw UsageError("precompute needs a model, a graph and a lexicon");
  }
  PrecomputeStats stats;
  for (const auto& q : queries) {
    if (writer.contains(q.id)) {
      ++stats.skipped;
      continue;
    }
    std::vector<ScoredEntity> entries;
    try {
      entries = generate_for_query(request, q);
    } catch (const Error& e) {
      throw Error("query " + std::to_string(q.id) + ": " + e.what());
    }
    if (entries.empty()) ++stats.zero;
    writer.append(q.id, entries);
    ++stats.computed;
  }
  return stats;
}

}  // namespace tkg::lm
