#include "tkg/core/dataset.hpp"

#include <algorithm>
#include <tuple>
#include <charconv>
#include <fstream>
#include <string>
#include <unordered_map>

#include "tkg/core/error.hpp"

namespace tkg {

std::string_view to_string(SplitName s) {
  switch (s) {
    case SplitName::train: return "train";
    case SplitName::valid: return "valid";
    case SplitName::test: return "test";
  }
  return "?";
}

SplitName parse_split_name(std::string_view s) {
  if (s == "train") return SplitName::train;
  if (s == "valid") return SplitName::valid;
  if (s == "test") return SplitName::test;
  throw UsageError("unknown split '" + std::string(s) + "' (expected train|valid|test)");
}

std::span<const Query> DatasetSplit::queries(SplitName s) const {
  switch (s) {
    case SplitName::train: return train;
    case SplitName::valid: return valid;
    case SplitName::test: return test;
  }
  return {};
}

const SplitStats& DatasetSplit::stats(SplitName s) const {
  switch (s) {
    case SplitName::train: return train_stats;
    case SplitName::valid: return valid_stats;
    case SplitName::test: return test_stats;
  }
  return train_stats;
}

namespace {

struct RawFact {
  std::int64_t subject;
  std::int64_t relation;
  std::int64_t object;
  std::int64_t time;
};

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const auto start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

std::int64_t parse_int(std::string_view field, const std::string& where) {
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw DataError(where + ": not an integer: '" + std::string(field) + "'");
  }
  return value;
}

std::vector<RawFact> read_split_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<RawFact> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    const auto where = path.filename().string() + ":" + std::to_string(line_no);
    if (fields.size() < 4) {
      throw DataError(where + ": expected at least 4 columns, got " + std::to_string(fields.size()));
    }
    RawFact f{parse_int(fields[0], where), parse_int(fields[1], where), parse_int(fields[2], where),
              parse_int(fields[3], where)};
    if (f.subject < 0 || f.relation < 0 || f.object < 0 || f.time < 0) {
      throw DataError(where + ": negative id or timestamp");
    }
    out.push_back(f);
  }
  if (out.empty()) throw DataError(path.filename().string() + ": empty split");
  return out;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  auto q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

SplitStats dedup(std::vector<Quadruple>& facts) {
  SplitStats stats;
  stats.records = facts.size();
  std::sort(facts.begin(), facts.end(), [](const Quadruple& a, const Quadruple& b) {
    return std::tie(a.time, a.subject, a.relation, a.object) <
           std::tie(b.time, b.subject, b.relation, b.object);
  });
  facts.erase(std::unique(facts.begin(), facts.end()), facts.end());
  stats.unique = facts.size();
  stats.duplicates = stats.records - stats.unique;
  if (!facts.empty()) {
    stats.first_time = facts.front().time;
    stats.last_time = facts.back().time;
  }
  return stats;
}

void append_queries(std::vector<Query>& out, const std::vector<Quadruple>& facts, bool inverse,
                    RelationId base, QueryId& next_id) {
  out.reserve(facts.size() * (inverse ? 2 : 1));
  for (const auto& f : facts) {
    out.push_back(Query{next_id++, f.subject, f.relation, f.time, f.object, Direction::forward});
    if (inverse) {
      out.push_back(Query{next_id++, f.object, f.relation + base, f.time, f.subject, Direction::inverse});
    }
  }
}

}  // namespace

Dataset build_dataset(std::size_t entity_count, std::size_t relation_count, SplitFacts facts,
                      bool inverse) {
  Dataset ds;
  ds.split.train_stats = dedup(facts.train);
  ds.split.valid_stats = dedup(facts.valid);
  ds.split.test_stats = dedup(facts.test);
  if (facts.train.empty() || facts.valid.empty() || facts.test.empty()) {
    throw DataError("empty split");
  }
  const auto& tr = ds.split.train_stats;
  const auto& va = ds.split.valid_stats;
  const auto& te = ds.split.test_stats;
  if (!(tr.last_time < va.first_time && va.last_time < te.first_time)) {
    throw DataError("split boundaries are not sequential: train [" + std::to_string(tr.first_time) + ", " +
                    std::to_string(tr.last_time) + "], valid [" + std::to_string(va.first_time) + ", " +
                    std::to_string(va.last_time) + "], test [" + std::to_string(te.first_time) + ", " +
                    std::to_string(te.last_time) + "]");
  }

  std::vector<Quadruple> all;
  all.reserve(facts.train.size() + facts.valid.size() + facts.test.size());
  for (const auto* part : {&facts.train, &facts.valid, &facts.test}) {
    all.insert(all.end(), part->begin(), part->end());
  }
  TemporalKG graph(entity_count, relation_count, std::move(all));
  ds.graph = inverse ? graph.augment_inverse() : std::move(graph);

  QueryId next_id = 0;
  const auto base = static_cast<RelationId>(relation_count);
  append_queries(ds.split.train, facts.train, inverse, base, next_id);
  append_queries(ds.split.valid, facts.valid, inverse, base, next_id);
  append_queries(ds.split.test, facts.test, inverse, base, next_id);
  return ds;
}

Dataset load_dataset(const std::filesystem::path& dir, const LoadOptions& options) {
  if (options.interval <= 0) throw UsageError("interval must be positive");
  if (!std::filesystem::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());

  const auto train = read_split_file(dir / "train.txt");
  const auto valid = read_split_file(dir / "valid.txt");
  const auto test = read_split_file(dir / "test.txt");

  // Normalize raw timestamps to consecutive snapshot indices.
  std::vector<std::int64_t> buckets;
  std::int64_t max_entity = -1;
  std::int64_t max_relation = -1;
  for (const auto* part : {&train, &valid, &test}) {
    for (const auto& f : *part) {
      buckets.push_back(floor_div(f.time, options.interval));
      max_entity = std::max({max_entity, f.subject, f.object});
      max_relation = std::max(max_relation, f.relation);
    }
  }
  std::sort(buckets.begin(), buckets.end());
  buckets.erase(std::unique(buckets.begin(), buckets.end()), buckets.end());
  std::unordered_map<std::int64_t, Time> index;
  for (std::size_t i = 0; i < buckets.size(); ++i) index.emplace(buckets[i], static_cast<Time>(i));

  std::size_t entity_count = static_cast<std::size_t>(max_entity + 1);
  std::size_t relation_count = static_cast<std::size_t>(max_relation + 1);
  if (const auto stat = dir / "stat.txt"; std::filesystem::exists(stat)) {
    std::ifstream in(stat);
    std::string line;
    std::getline(in, line);
    const auto fields = split_fields(line);
    if (fields.size() < 2) throw DataError("stat.txt: expected '|E| |R|'");
    const auto e = parse_int(fields[0], "stat.txt:1");
    const auto r = parse_int(fields[1], "stat.txt:1");
    if (e <= max_entity || r <= max_relation) {
      throw DataError("stat.txt counts are smaller than ids present in the splits");
    }
    entity_count = static_cast<std::size_t>(e);
    relation_count = static_cast<std::size_t>(r);
  }

  auto convert = [&](const std::vector<RawFact>& raw) {
    std::vector<Quadruple> out;
    out.reserve(raw.size());
    for (const auto& f : raw) {
      out.push_back(Quadruple{static_cast<EntityId>(f.subject), static_cast<RelationId>(f.relation),
                              static_cast<EntityId>(f.object),
                              index.at(floor_div(f.time, options.interval))});
    }
    return out;
  };
  return build_dataset(entity_count, relation_count, SplitFacts{convert(train), convert(valid), convert(test)},
                       options.inverse);
}

}  // namespace tkg
