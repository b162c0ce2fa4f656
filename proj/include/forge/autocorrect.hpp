#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/generate.hpp"

namespace forge {

inline constexpr std::string_view kSentenceStart = "<s>";
inline constexpr std::string_view kSentenceEnd = "</s>";

// Single-token substitution learned from a human correction. Context tokens
// are the draft neighbours, "<s>" / "</s>" at the edges.
struct CorrectionRule {
  std::string from;
  std::string to;
  std::optional<std::string> left;
  std::optional<std::string> right;
  std::size_t weight = 1;

  bool same_key(const CorrectionRule& other) const {
    return from == other.from && to == other.to && left == other.left && right == other.right;
  }
  bool operator==(const CorrectionRule&) const = default;
};

// Rules sorted by (from, to, left, right); keys are unique.
struct CorrectionMemory {
  std::vector<CorrectionRule> rules;

  bool empty() const { return rules.empty(); }
  std::size_t total_weight() const;
  bool operator==(const CorrectionMemory&) const = default;
};

enum class EditReason { NearestTableValue, MemoryRule };
std::string_view to_string(EditReason reason);

// Substitution of the token at `token_index`; edits apply in order.
struct Edit {
  std::size_t token_index = 0;
  std::string from;
  std::string to;
  EditReason reason = EditReason::NearestTableValue;

  bool operator==(const Edit&) const = default;
};

struct CorrectionResult {
  std::string text;
  std::vector<Edit> edits;
};

struct CorrectorConfig {
  double numeric_relative_threshold = 0.25;  // |x - v| / max(|x|, |v|)
  double string_similarity_threshold = 0.6;  // ro_similarity
};

// Only draft tokens that occur nowhere in the tables are edited. Memory rules
// go first: context matches, then (value tokens only) any rule on the same
// token, heavier rules first. A rule whose `to` is another rule's `from` is
// never applied. Remaining unsupported value tokens move to the nearest table
// value of their kind within the thresholds. Rounds repeat until nothing changes.
CorrectionResult correct_values(std::string_view draft, std::span<const Table> tables,
                                const CorrectionMemory& memory, const CorrectorConfig& config = {});
CorrectionResult correct_values(const GenerationResult& draft, std::span<const Table> tables,
                                const CorrectionMemory& memory, const CorrectorConfig& config = {});

std::vector<std::string> apply_edits(std::vector<std::string> tokens, std::span<const Edit> edits);

// Value-token substitutions on an edit-distance alignment of the two texts,
// merged so repeated observations add up.
std::vector<CorrectionRule> learn_corrections(std::string_view draft, std::string_view human);

CorrectionMemory apply_memory(CorrectionMemory memory, std::span<const CorrectionRule> rules);

CorrectionMemory read_memory(std::istream& in);
CorrectionMemory read_memory_file(const std::filesystem::path& path);
void write_memory(std::ostream& out, const CorrectionMemory& memory);
std::string rule_to_line(const CorrectionRule& rule);
CorrectionRule rule_from_line(std::string_view line, std::size_t line_no = 0);

}  // namespace forge
