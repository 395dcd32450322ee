#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tkg/core/types.hpp"

namespace tkg::prompt {

/// relation-id -> lexical string over the augmented vocabulary. Inverse ids
/// render as "inv_" + base string.
class RelationLexicon {
 public:
  RelationLexicon() = default;
  /// `names[r]` for base relation r; names are normalized (whitespace and the
  /// reserved characters [ ] , become '_').
  explicit RelationLexicon(std::vector<std::string> names);

  /// "rel_<id>" placeholders, for datasets shipped without surface names.
  static RelationLexicon numbered(std::size_t relation_count);
  /// Two-column TSV `relation_id<TAB>surface_string`. Ids must cover [0, relation_count).
  static RelationLexicon load(const std::filesystem::path& path, std::size_t relation_count);

  std::size_t base_size() const { return names_.size(); }
  /// Throws UsageError naming the relation id when it is outside 2|R|.
  std::string text(RelationId r) const;

 private:
  std::vector<std::string> names_;
};

struct PromptOptions {
  /// Render facts as `t:[(s,r,o)]` instead of `t:[s,r,o]`.
  bool parenthesized = false;
};

struct PromptDoc {
  std::string text;
  std::size_t query_suffix_offset = 0;  ///< byte offset where the open query begins
  std::size_t fact_count = 0;

  std::string_view query_suffix() const { return std::string_view(text).substr(query_suffix_offset); }
};

/// One line per fact `t:[s,r_text,o]` followed by the open query `t_q:[s_q,r_text_q,`.
/// Facts must be time-ascending and strictly before the query time.
PromptDoc render_prompt(std::span<const Quadruple> facts, const Query& query, const RelationLexicon& lexicon,
                        const PromptOptions& options = {});

struct ParsedFact {
  Time time = 0;
  EntityId subject = 0;
  std::string relation;
  EntityId object = 0;
};

struct ParsedPrompt {
  std::vector<ParsedFact> facts;
  Time query_time = 0;
  EntityId query_subject = 0;
  std::string query_relation;
};

/// Inverse of render_prompt. Accepts both fact renderings.
/// Returns nullopt on any deviation from the grammar.
std::optional<ParsedPrompt> parse_prompt(std::string_view text);

}  // namespace tkg::prompt
