#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

struct Cell {
  std::string text;
  int emphasis = 0;  // count of asterisks attached to the cell

  bool operator==(const Cell&) const = default;
};

struct Table {
  std::string table_id;
  std::string title;
  std::vector<std::string> columns;
  // Emphasis carried by header cells. Empty means no header emphasis;
  // otherwise one entry per column.
  std::vector<int> column_emphasis;
  std::vector<std::vector<Cell>> rows;

  std::size_t column_count() const { return columns.size(); }
  std::size_t row_count() const { return rows.size(); }
  int header_emphasis(std::size_t column) const {
    return column < column_emphasis.size() ? column_emphasis[column] : 0;
  }

  bool operator==(const Table&) const = default;
};

enum class Split { Train, Test };

std::string_view to_string(Split s);
std::optional<Split> split_from_string(std::string_view s);

struct PairedExample {
  std::string id;
  std::vector<Table> tables;
  std::string report;
  Split split = Split::Train;
  // Free-form annotations (synthesis flags, source ids). Serialized only when nonempty.
  std::map<std::string, std::string> meta;

  bool operator==(const PairedExample&) const = default;
};

struct Corpus {
  std::vector<PairedExample> examples;
  std::map<std::string, std::string> provenance;

  std::size_t size() const { return examples.size(); }
  std::vector<const PairedExample*> split(Split s) const;
  const PairedExample* find(std::string_view id) const;
};

// --- line-delimited storage ------------------------------------------------

// Throws ParseError naming the 1-based line and offending field, or on a duplicate id.
Corpus parse_corpus(std::istream& in);
Corpus parse_corpus_text(std::string_view text);
Corpus ingest_corpus(const std::filesystem::path& path);

std::string example_to_line(const PairedExample& example);
PairedExample example_from_line(std::string_view line, std::size_t line_no = 0);
void write_corpus(std::ostream& out, const Corpus& corpus);
std::string corpus_to_text(const Corpus& corpus);
void write_corpus_file(const std::filesystem::path& path, const Corpus& corpus);

std::string table_to_json(const Table& table);
Table table_from_json(std::string_view json, std::size_t line_no = 0);
std::vector<Table> read_tables(std::istream& in);

// --- pairing ---------------------------------------------------------------

// First "Table<digit>..." token of the title, else of the table id.
std::optional<std::string> table_number(const Table& table);

struct PairingResult {
  std::vector<PairedExample> examples;
  std::size_t unmatched = 0;  // tables with no candidate paragraph
};

// For every table, candidates are the paragraphs mentioning its table number
// (case-insensitive token match); the candidate containing the most table
// values wins, ties toward the earlier paragraph.
PairingResult pair_tables_to_paragraphs(std::span<const Table> tables,
                                        std::span<const std::string> paragraphs);

// Paragraphs are separated by blank lines.
std::vector<std::string> split_paragraphs(std::string_view text);

// Assigns round(test_fraction * N) examples to test, deterministically from seed.
Corpus split_corpus(Corpus corpus, std::uint64_t seed, double test_fraction);

}  // namespace forge
