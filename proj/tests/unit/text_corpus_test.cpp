#include <doctest.h>

#include <sstream>

#include "desk.hpp"
#include "forge/corpus.hpp"
#include "forge/errors.hpp"
#include "forge/rng.hpp"
#include "forge/text.hpp"

using namespace forge;

namespace {

std::vector<std::string> toks(std::string_view s) { return tokenize(s); }

Table small_table() {
  Table t;
  t.table_id = "Table3";
  t.title = "Hemolysis results";
  t.columns = {"Sample", "Accuracy"};
  t.rows = {{{"Plasma", 0}, {"98.5", 0}}, {{"Serum", 0}, {"71.0", 1}}};
  return t;
}

}  // namespace

TEST_CASE("tokenizer keeps numerals and detaches punctuation") {
  CHECK(toks("At 0.65, the -2 value (n=3).") ==
        std::vector<std::string>{"At", "0.65", ",", "the", "-2", "value", "(", "n", "=", "3", ")", "."});
  CHECK(toks("accuracy 71.0%") == std::vector<std::string>{"accuracy", "71.0", "%"});
  CHECK(toks("a-2") == std::vector<std::string>{"a", "-", "2"});
  CHECK(toks("71.0** and ***") == std::vector<std::string>{"71.0", "**", "and", "***"});
  CHECK(toks("value [N/A] here") == std::vector<std::string>{"value", "[N/A]", "here"});
  CHECK(toks("  \t\n ").empty());
}

TEST_CASE("token spans address the source text") {
  const std::string text = "Run RunID42, 0.5 ng/mL.";
  for (const auto& t : tokenize_spans(text)) CHECK(text.substr(t.begin, t.end - t.begin) == t.text);
}

TEST_CASE("join_tokens re-tokenizes to the same sequence") {
  Rng rng(7);
  const char* pieces[] = {"a", "0.5", "-3", ",", ".", "**", "Table1", "[N/A]", "(", "mL", "%", "x-y"};
  for (int trial = 0; trial < 500; ++trial) {
    std::string text;
    const std::size_t n = rng.below(12);
    for (std::size_t i = 0; i < n; ++i) {
      if (rng.coin()) text += ' ';
      text += pieces[rng.below(std::size(pieces))];
    }
    const auto once = tokenize(text);
    CHECK(tokenize(join_tokens(once)) == once);
  }
}

TEST_CASE("splice_text replaces spans and guards the token sequence") {
  const std::string text = "At 300 ng/mL, fine.";
  const auto spans = tokenize_spans(text);
  CHECK(splice_text(text, {{spans[1].begin, spans[1].end, "301"}}, toks("At 301 ng/mL, fine.")) == "At 301 ng/mL, fine.");
  // replacement that would merge into the neighbour falls back to joined tokens
  const std::vector<std::string> expected = {"At", "3", "0", "ng", "/", "mL", ",", "fine", "."};
  CHECK(tokenize(splice_text(text, {{spans[1].begin, spans[1].end, "3 0"}}, expected)) == expected);
}

TEST_CASE("numbers parse only in plain integer or decimal form") {
  CHECK(parse_number("12") == 12.0);
  CHECK(parse_number("-0.65") == doctest::Approx(-0.65));
  CHECK_FALSE(parse_number("1e5"));
  CHECK_FALSE(parse_number("1,000"));
  CHECK_FALSE(parse_number("12a"));
  CHECK_FALSE(parse_number(""));
  CHECK(decimal_places("0.650") == 3);
  CHECK(decimal_places("12") == 0);
  CHECK(format_fixed(0.5, 2) == "0.50");
  CHECK(format_fixed(-1.25, 1).size() == 4);
}

TEST_CASE("corpus lines round-trip") {
  PairedExample ex;
  ex.id = "e1";
  ex.tables = {small_table()};
  ex.report = "In Table3 the Plasma accuracy was 98.5.";
  ex.split = Split::Test;
  ex.meta = {{"synthetic_source", "e0"}};
  CHECK(example_from_line(example_to_line(ex)) == ex);

  auto t = small_table();
  t.column_emphasis = {1, 0};
  CHECK(table_from_json(table_to_json(t)) == t);

  const auto corpus = desk::make_corpus({.examples = 20, .seed = 3});
  const auto again = parse_corpus_text(corpus_to_text(corpus));
  REQUIRE(again.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) CHECK(again.examples[i] == corpus.examples[i]);
}

TEST_CASE("malformed corpus lines name line and field") {
  PairedExample ex;
  ex.id = "e1";
  ex.tables = {small_table()};
  ex.report = "text";
  const std::string good = example_to_line(ex);

  auto field_of = [](const std::string& text) -> std::pair<std::size_t, std::string> {
    try {
      parse_corpus_text(text);
    } catch (const ParseError& e) {
      return {e.line(), e.field()};
    }
    return {0, "<none>"};
  };
  CHECK(field_of(good + "\n\n" + good + "\n") == std::pair<std::size_t, std::string>{3, "id"});
  CHECK(field_of(good + "\n{\"id\":\"x\"}\n").first == 2);
  CHECK(field_of("{not json}\n").first == 1);

  auto bad_split = good;
  bad_split.replace(bad_split.find("\"train\""), 7, "\"dev\"");
  CHECK(field_of(bad_split).second == "split");

  auto ragged = small_table();
  ragged.rows[1].pop_back();
  ex.tables = {ragged};
  CHECK(field_of(example_to_line(ex)).second == "tables[0].rows[1]");

  ex.tables = {small_table(), small_table()};
  CHECK(field_of(example_to_line(ex)).second == "tables[1].table_id");
}

TEST_CASE("table numbers come from the title, then the id") {
  auto t = small_table();
  CHECK(table_number(t) == "table3");
  t.title = "See Table12b for details";
  CHECK(table_number(t) == "table12b");
  t.title = "untitled";
  t.table_id = "misc";
  CHECK_FALSE(table_number(t));
}

TEST_CASE("pairing picks the paragraph with the most table values") {
  const auto t = small_table();
  const std::vector<std::string> paragraphs = split_paragraphs(
      "Table3 is shown below.\n\nIn Table3 the Plasma accuracy was 98.5 and Serum 71.0.\n\nNothing relevant.\n");
  REQUIRE(paragraphs.size() == 3);
  auto result = pair_tables_to_paragraphs(std::span<const Table>(&t, 1), paragraphs);
  REQUIRE(result.examples.size() == 1);
  CHECK(result.examples[0].report == paragraphs[1]);
  CHECK(result.unmatched == 0);

  auto orphan = small_table();
  orphan.table_id = "Table9";
  orphan.title = "Other";
  result = pair_tables_to_paragraphs(std::span<const Table>(&orphan, 1), paragraphs);
  CHECK(result.examples.empty());
  CHECK(result.unmatched == 1);
}

TEST_CASE("paragraph split joins wrapped lines") {
  CHECK(split_paragraphs("a\nb\n \nc\r\n\r\n\r\nd") == std::vector<std::string>{"a b", "c", "d"});
  CHECK(split_paragraphs("").empty());
}

TEST_CASE("split assigns round(fraction * N) test examples deterministically") {
  const auto corpus = desk::make_corpus({.examples = 43, .seed = 5});
  const auto a = split_corpus(corpus, 11, 0.3);
  const auto b = split_corpus(corpus, 11, 0.3);
  CHECK(a.split(Split::Test).size() == 13);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.examples[i].split == b.examples[i].split);
  CHECK(split_corpus(corpus, 11, 0.0).split(Split::Test).empty());
  CHECK_THROWS_AS(split_corpus(corpus, 1, 1.5), std::invalid_argument);
}

TEST_CASE("derived seeds are order sensitive and the bounded draw stays in range") {
  CHECK(derive_seed({1, 2}) != derive_seed({2, 1}));
  Rng rng(derive_seed({9}));
  std::vector<std::size_t> hits(7, 0);
  for (int i = 0; i < 7000; ++i) ++hits[rng.below(7)];
  for (auto h : hits) CHECK(h > 800);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.unit();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}
