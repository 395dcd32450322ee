#include "tkg/prompt/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "tkg/core/error.hpp"

namespace tkg::prompt {

namespace {

std::string normalize(std::string name) {
  for (auto& c : name) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '[' || c == ']' || c == ',') c = '_';
  }
  return name;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

RelationLexicon::RelationLexicon(std::vector<std::string> names) : names_(std::move(names)) {
  for (auto& n : names_) {
    n = normalize(std::move(n));
    if (n.empty()) throw DataError("empty relation surface string");
  }
}

RelationLexicon RelationLexicon::numbered(std::size_t relation_count) {
  std::vector<std::string> names;
  names.reserve(relation_count);
  for (std::size_t r = 0; r < relation_count; ++r) names.push_back("rel_" + std::to_string(r));
  return RelationLexicon(std::move(names));
}

RelationLexicon RelationLexicon::load(const std::filesystem::path& path, std::size_t relation_count) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon " + path.string());
  std::vector<std::string> names(relation_count);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    RelationId id = 0;
    if (tab == std::string::npos || !parse_number(std::string_view(line).substr(0, tab), id)) {
      throw DataError(path.filename().string() + ":" + std::to_string(line_no) +
                      ": expected 'relation_id<TAB>surface_string'");
    }
    if (id >= relation_count) {
      throw DataError(path.filename().string() + ":" + std::to_string(line_no) + ": relation id " +
                      std::to_string(id) + " out of range");
    }
    names[id] = line.substr(tab + 1);
  }
  for (std::size_t r = 0; r < relation_count; ++r) {
    if (names[r].empty()) throw DataError("lexicon has no entry for relation " + std::to_string(r));
  }
  return RelationLexicon(std::move(names));
}

std::string RelationLexicon::text(RelationId r) const {
  const auto base = names_.size();
  if (r < base) return names_[r];
  if (r < 2 * base) return "inv_" + names_[r - base];
  throw UsageError("relation lexicon has no entry for relation id " + std::to_string(r));
}

PromptDoc render_prompt(std::span<const Quadruple> facts, const Query& query, const RelationLexicon& lexicon,
                        const PromptOptions& options) {
  PromptDoc doc;
  std::ostringstream out;
  const char* open = options.parenthesized ? ":[(" : ":[";
  const char* close = options.parenthesized ? ")]\n" : "]\n";
  for (const auto& f : facts) {
    out << f.time << open << f.subject << ',' << lexicon.text(f.relation) << ',' << f.object << close;
  }
  doc.fact_count = facts.size();
  doc.query_suffix_offset = static_cast<std::size_t>(out.tellp());
  out << query.time << ":[" << query.subject << ',' << lexicon.text(query.relation) << ',';
  doc.text = out.str();
  return doc;
}

std::optional<ParsedPrompt> parse_prompt(std::string_view text) {
  ParsedPrompt parsed;
  auto parse_head = [](std::string_view line, Time& t, std::string_view& rest) {
    const auto colon = line.find(":[");
    if (colon == std::string_view::npos || !parse_number(line.substr(0, colon), t)) return false;
    rest = line.substr(colon + 2);
    return true;
  };

  std::size_t pos = 0;
  while (true) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) break;
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ParsedFact fact;
    std::string_view rest;
    if (!parse_head(line, fact.time, rest)) return std::nullopt;
    if (rest.starts_with('(')) {
      if (!rest.ends_with(")]")) return std::nullopt;
      rest = rest.substr(1, rest.size() - 3);
    } else {
      if (!rest.ends_with(']')) return std::nullopt;
      rest.remove_suffix(1);
    }
    const auto c1 = rest.find(',');
    const auto c2 = rest.rfind(',');
    if (c1 == std::string_view::npos || c1 == c2) return std::nullopt;
    fact.relation = std::string(rest.substr(c1 + 1, c2 - c1 - 1));
    if (fact.relation.empty() || fact.relation.find(',') != std::string::npos) return std::nullopt;
    if (!parse_number(rest.substr(0, c1), fact.subject) || !parse_number(rest.substr(c2 + 1), fact.object)) {
      return std::nullopt;
    }
    parsed.facts.push_back(std::move(fact));
  }

  std::string_view rest;
  if (!parse_head(text.substr(pos), parsed.query_time, rest) || !rest.ends_with(',')) return std::nullopt;
  rest.remove_suffix(1);
  const auto c = rest.find(',');
  if (c == std::string_view::npos || !parse_number(rest.substr(0, c), parsed.query_subject)) return std::nullopt;
  parsed.query_relation = std::string(rest.substr(c + 1));
  if (parsed.query_relation.empty() || parsed.query_relation.find(',') != std::string::npos) return std::nullopt;
  return parsed;
}

}  // namespace tkg::prompt
