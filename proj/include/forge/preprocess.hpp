#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "forge/align.hpp"
#include "forge/corpus.hpp"

namespace forge {

struct FlattenLimits {
  std::size_t max_rows = 1;
  std::size_t max_tokens_per_row = 1;
  double coverage_target = 0.85;

  void validate() const;
  bool operator==(const FlattenLimits&) const = default;
};

// Origin of one flattened token. Title tokens use row = -1, column = -1;
// header tokens row = -1 with their column. `offset` is the token's index
// within its cell (or title / header).
struct SourcePos {
  int row = -1;
  int column = -1;
  std::size_t offset = 0;

  bool operator==(const SourcePos&) const = default;
};

inline constexpr int kHeaderRow = -1;

struct FlatTable {
  std::vector<std::string> tokens;
  std::vector<SourcePos> source_map;

  bool operator==(const FlatTable&) const = default;
};

// title, header, then body rows row-major; rows past max_rows and row tokens
// past max_tokens_per_row are dropped. Title and header are never truncated.
FlatTable flatten_table(const Table& table, const FlattenLimits& limits);

// Drops a body token when the previous row holds the identical token at the
// same (column, offset). Title and header tokens are kept.
FlatTable dedup_consecutive(const FlatTable& flat);

// Emphasis on a body cell marks its column header and its row's first cell.
Table propagate_markup(Table table);

enum class AggregateKind { GroupMean, ControlDifference };

// GroupMean: rows sharing `group_column` collapse into one row of means.
// ControlDifference: rows other than the one whose `group_column` equals
// `control` get (row - control) in numeric cells.
// `columns` restricts the numeric targets; when listed, a non-numeric cell is
// an error. When empty, every other column whose cells are numeric is used.
struct AggregateRule {
  AggregateKind kind = AggregateKind::GroupMean;
  std::string group_column;
  std::string control;
  std::vector<std::string> columns;
};

std::vector<AggregateRule> parse_aggregate_rules(std::istream& in);
Table apply_aggregate_rules(const Table& table, std::span<const AggregateRule> rules);

// Smallest (max_rows, max_tokens_per_row), rows minimized first, such that at
// least `coverage_target` of the train split's matched values survive flattening.
FlattenLimits calibrate_limits(const Corpus& corpus, double coverage_target);

// Fraction of the train split's matched values that survive `limits`.
double limit_coverage(const Corpus& corpus, const FlattenLimits& limits);

}  // namespace forge
