#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "forge/corpus.hpp"

namespace forge {

enum class ValueKind { Integer, Float, RunId, StringValue, TableId, EmphasisMark };

inline constexpr ValueKind kAllValueKinds[] = {ValueKind::Integer,     ValueKind::Float,
                                               ValueKind::RunId,       ValueKind::StringValue,
                                               ValueKind::TableId,     ValueKind::EmphasisMark};

std::string_view to_string(ValueKind kind);
std::optional<ValueKind> value_kind_from_string(std::string_view name);

// Word lists behind value classification: closed-class English words
// (compared case-insensitively) and lowercase-initial domain abbreviations
// that still count as string values.
class Lexicon {
 public:
  static const Lexicon& standard();

  // Adds the `top_k` most frequent lowercase report tokens to the stoplist,
  // skipping any token that also occurs in a table of the corpus.
  static Lexicon from_corpus(const Corpus& corpus, std::size_t top_k = 1000);

  bool is_stopword(std::string_view token) const;
  bool is_abbreviation(std::string_view token) const;

 private:
  Lexicon();
  std::unordered_set<std::string> stopwords_;
  std::unordered_set<std::string> abbreviations_;
};

std::optional<ValueKind> classify_value(std::string_view token);
std::optional<ValueKind> classify_value(std::string_view token, const Lexicon& lexicon);

enum class Region { TableId, Title, Header, Body };

// Where a value sits inside the example's tables. `token`/`length` address
// the value's tokens within the cell (or title / header / id).
struct ValueSource {
  std::size_t table = 0;
  Region region = Region::Body;
  int row = -1;     // body rows only
  int column = -1;  // body and header
  std::size_t token = 0;
  std::size_t length = 1;

  bool operator==(const ValueSource&) const = default;
};

struct TypedValue {
  std::string surface;  // tokens joined by a single space
  ValueKind kind = ValueKind::StringValue;
  std::optional<ValueSource> source;

  std::vector<std::string> tokens() const;
  bool operator==(const TypedValue&) const = default;
};

struct TableExtract {
  std::vector<TypedValue> values;

  std::vector<std::string> surfaces() const;
  bool empty() const { return values.empty(); }
};

struct Alignment {
  TableExtract extract;
  std::vector<std::size_t> report_positions;  // first report token of each value
};

// Tokens of a cell as the pipeline sees them: text tokens, then one '*' run
// when the cell carries emphasis.
std::vector<std::string> cell_tokens(const Cell& cell);
std::vector<std::string> header_tokens(const Table& table, std::size_t column);

// Every token position of a set of tables, in flatten order (id, title,
// headers, body row-major), with greedy lookup for multi-token concept names.
class TableIndex {
 public:
  explicit TableIndex(std::span<const Table> tables, const Lexicon& lexicon = Lexicon::standard());

  struct Occurrence {
    std::vector<std::string> tokens;
    ValueSource source;
  };

  bool contains(std::string_view token) const { return first_.count(std::string(token)) > 0; }
  std::optional<ValueSource> find(std::string_view token) const;

  // Longest concept (run of >= 2 string-value tokens inside one cell, title or
  // header) that matches `tokens` starting at `pos`.
  const Occurrence* longest_concept(std::span<const std::string> tokens, std::size_t pos) const;

  std::span<const Occurrence> tokens() const { return tokens_; }

 private:
  std::vector<Occurrence> tokens_;
  std::unordered_map<std::string, ValueSource> first_;
  std::unordered_map<std::string, std::vector<Occurrence>> concepts_;
};

// Scans the report left to right, keeping every token that classifies as a
// value and occurs in the tables. Extract order is report order.
Alignment match_values(std::span<const Table> tables, std::string_view report,
                       const Lexicon& lexicon = Lexicon::standard());
Alignment match_values(const PairedExample& example, const Lexicon& lexicon = Lexicon::standard());

// Mean normalized depth (row + 1) / rows over values sourced from table bodies.
double difficulty_score(const PairedExample& example, const Alignment& alignment);

// The `count` hardest train examples, hardest first, ties by id.
std::vector<PairedExample> select_curriculum(const Corpus& corpus, std::size_t count);

// match_values over every example; index-aligned with corpus.examples.
std::vector<Alignment> align_corpus(const Corpus& corpus);
std::vector<Alignment> align_corpus_serial(const Corpus& corpus);

}  // namespace forge
