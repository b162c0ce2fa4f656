#include "forge/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "forge/align.hpp"
#include "forge/errors.hpp"
#include "forge/rng.hpp"
#include "forge/text.hpp"

namespace forge {

using nlohmann::json;

std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

std::optional<Split> split_from_string(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  return std::nullopt;
}

std::vector<const PairedExample*> Corpus::split(Split s) const {
  std::vector<const PairedExample*> out;
  for (const auto& e : examples) {
    if (e.split == s) out.push_back(&e);
  }
  return out;
}

const PairedExample* Corpus::find(std::string_view id) const {
  for (const auto& e : examples) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

namespace {

class Reader {
 public:
  explicit Reader(std::size_t line) : line_(line) {}

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw ParseError(line_, field, "field '" + field + "': " + what);
  }

  const json& member(const json& obj, const std::string& key, const std::string& path) const {
    if (!obj.is_object()) fail(path.empty() ? key : path, "expected an object");
    auto it = obj.find(key);
    const std::string field = path.empty() ? key : path + "." + key;
    if (it == obj.end()) throw ParseError(line_, field, "missing field '" + field + "'");
    return *it;
  }

  std::string string(const json& obj, const std::string& key, const std::string& path) const {
    const auto& v = member(obj, key, path);
    if (!v.is_string()) fail(path.empty() ? key : path + "." + key, "expected a string");
    return v.get<std::string>();
  }

  const json& array(const json& obj, const std::string& key, const std::string& path) const {
    const auto& v = member(obj, key, path);
    if (!v.is_array()) fail(path.empty() ? key : path + "." + key, "expected an array");
    return v;
  }

  Table table(const json& j, const std::string& path) const {
    Table t;
    t.table_id = string(j, "table_id", path);
    if (t.table_id.empty()) fail(path + ".table_id", "must be nonempty");
    t.title = string(j, "title", path);
    const auto& cols = array(j, "columns", path);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (!cols[c].is_string()) fail(path + ".columns[" + std::to_string(c) + "]", "expected a string");
      t.columns.push_back(cols[c].get<std::string>());
    }
    if (auto it = j.find("column_emphasis"); it != j.end()) {
      if (!it->is_array() || it->size() != t.columns.size()) {
        fail(path + ".column_emphasis", "expected one integer per column");
      }
      for (const auto& v : *it) {
        if (!v.is_number_integer() || v.get<int>() < 0) {
          fail(path + ".column_emphasis", "expected non-negative integers");
        }
        t.column_emphasis.push_back(v.get<int>());
      }
    }
    const auto& rows = array(j, "rows", path);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::string rpath = path + ".rows[" + std::to_string(r) + "]";
      if (!rows[r].is_array()) fail(rpath, "expected an array of cells");
      if (rows[r].size() != t.columns.size()) {
        fail(rpath, "has " + std::to_string(rows[r].size()) + " cells, expected " +
                        std::to_string(t.columns.size()));
      }
      std::vector<Cell> row;
      for (std::size_t c = 0; c < rows[r].size(); ++c) {
        const std::string cpath = rpath + "[" + std::to_string(c) + "]";
        Cell cell;
        cell.text = string(rows[r][c], "text", cpath);
        if (cell.text.find('\n') != std::string::npos) fail(cpath + ".text", "contains a newline");
        const auto& em = member(rows[r][c], "emphasis", cpath);
        if (!em.is_number_integer() || em.get<long long>() < 0) {
          fail(cpath + ".emphasis", "expected a non-negative integer");
        }
        cell.emphasis = em.get<int>();
        row.push_back(std::move(cell));
      }
      t.rows.push_back(std::move(row));
    }
    return t;
  }

 private:
  std::size_t line_;
};

json table_json(const Table& t) {
  json rows = json::array();
  for (const auto& row : t.rows) {
    json r = json::array();
    for (const auto& c : row) r.push_back({{"text", c.text}, {"emphasis", c.emphasis}});
    rows.push_back(std::move(r));
  }
  json j = {{"table_id", t.table_id}, {"title", t.title}, {"columns", t.columns}};
  if (std::any_of(t.column_emphasis.begin(), t.column_emphasis.end(), [](int e) { return e > 0; })) {
    j["column_emphasis"] = t.column_emphasis;
  }
  j["rows"] = std::move(rows);
  return j;
}

json parse_json(std::string_view text, std::size_t line_no) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(line_no, "", std::string("malformed JSON: ") + e.what());
  }
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

}  // namespace

std::string table_to_json(const Table& table) { return table_json(table).dump(); }

Table table_from_json(std::string_view text, std::size_t line_no) {
  return Reader(line_no).table(parse_json(text, line_no), "table");
}

PairedExample example_from_line(std::string_view line, std::size_t line_no) {
  const json j = parse_json(line, line_no);
  Reader rd(line_no);
  if (!j.is_object()) rd.fail("<root>", "expected an object");
  PairedExample ex;
  ex.id = rd.string(j, "id", "");
  if (ex.id.empty()) rd.fail("id", "must be nonempty");
  const auto split = rd.string(j, "split", "");
  auto s = split_from_string(split);
  if (!s) rd.fail("split", "expected \"train\" or \"test\", got \"" + split + "\"");
  ex.split = *s;
  const auto& tables = rd.array(j, "tables", "");
  if (tables.empty()) rd.fail("tables", "must be nonempty");
  std::unordered_set<std::string> ids;
  for (std::size_t t = 0; t < tables.size(); ++t) {
    const std::string path = "tables[" + std::to_string(t) + "]";
    ex.tables.push_back(rd.table(tables[t], path));
    if (!ids.insert(ex.tables.back().table_id).second) {
      rd.fail(path + ".table_id", "duplicate table id '" + ex.tables.back().table_id + "'");
    }
  }
  ex.report = rd.string(j, "report", "");
  if (ex.report.empty()) rd.fail("report", "must be nonempty");
  if (auto it = j.find("meta"); it != j.end()) {
    if (!it->is_object()) rd.fail("meta", "expected an object");
    for (const auto& [k, v] : it->items()) {
      if (!v.is_string()) rd.fail("meta." + k, "expected a string");
      ex.meta[k] = v.get<std::string>();
    }
  }
  return ex;
}

std::string example_to_line(const PairedExample& e) {
  json tables = json::array();
  for (const auto& t : e.tables) tables.push_back(table_json(t));
  json j = {{"id", e.id}, {"split", std::string(to_string(e.split))}, {"tables", std::move(tables)},
            {"report", e.report}};
  if (!e.meta.empty()) j["meta"] = e.meta;
  return j.dump();
}

Corpus parse_corpus(std::istream& in) {
  Corpus corpus;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    auto ex = example_from_line(line, line_no);
    if (!ids.insert(ex.id).second) throw ParseError(line_no, "id", "duplicate id '" + ex.id + "'");
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

Corpus parse_corpus_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_corpus(in);
}

Corpus ingest_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file " + path.string());
  Corpus c = parse_corpus(in);
  c.provenance["source"] = path.string();
  return c;
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& e : corpus.examples) out << example_to_line(e) << '\n';
}

std::string corpus_to_text(const Corpus& corpus) {
  std::ostringstream out;
  write_corpus(out, corpus);
  return out.str();
}

void write_corpus_file(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus file " + path.string());
  write_corpus(out, corpus);
}

std::vector<Table> read_tables(std::istream& in) {
  std::vector<Table> tables;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    tables.push_back(table_from_json(line, line_no));
  }
  return tables;
}

// --- pairing ---------------------------------------------------------------

namespace {

bool is_table_number(std::string_view tok) {
  if (tok.size() < 6 || to_lower_ascii(tok.substr(0, 5)) != "table") return false;
  if (!is_ascii_digit(tok[5])) return false;
  return std::all_of(tok.begin() + 5, tok.end(),
                     [](char c) { return is_ascii_digit(c) || is_ascii_alpha(c); });
}

}  // namespace

std::optional<std::string> table_number(const Table& table) {
  for (const auto* source : {&table.title, &table.table_id}) {
    for (const auto& tok : tokenize(*source)) {
      if (is_table_number(tok)) return to_lower_ascii(tok);
    }
  }
  return std::nullopt;
}

std::vector<std::string> split_paragraphs(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  std::size_t pos = 0;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (is_blank(line)) {
      flush();
    } else {
      if (!current.empty()) current.push_back(' ');
      current.append(line);
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  flush();
  return out;
}

PairingResult pair_tables_to_paragraphs(std::span<const Table> tables,
                                        std::span<const std::string> paragraphs) {
  std::vector<std::vector<std::string>> lowered(paragraphs.size());
  for (std::size_t p = 0; p < paragraphs.size(); ++p) {
    for (const auto& tok : tokenize(paragraphs[p])) lowered[p].push_back(to_lower_ascii(tok));
  }

  PairingResult result;
  for (const auto& table : tables) {
    auto number = table_number(table);
    std::optional<std::size_t> best;
    std::size_t best_count = 0;
    if (number) {
      for (std::size_t p = 0; p < paragraphs.size(); ++p) {
        if (std::find(lowered[p].begin(), lowered[p].end(), *number) == lowered[p].end()) continue;
        const std::size_t count =
            match_values(std::span<const Table>(&table, 1), paragraphs[p]).extract.values.size();
        if (!best || count > best_count) {
          best = p;
          best_count = count;
        }
      }
    }
    if (!best) {
      ++result.unmatched;
      continue;
    }
    PairedExample ex;
    ex.id = table.table_id;
    ex.tables = {table};
    ex.report = paragraphs[*best];
    ex.split = Split::Train;
    result.examples.push_back(std::move(ex));
  }
  return result;
}

Corpus split_corpus(Corpus corpus, std::uint64_t seed, double test_fraction) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) {
    throw std::invalid_argument("test_fraction must lie in [0, 1]");
  }
  const std::size_t n = corpus.examples.size();
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed({seed, 0x5b1ULL}));
  rng.shuffle(order.begin(), order.end());
  for (auto& e : corpus.examples) e.split = Split::Train;
  for (std::size_t k = 0; k < n_test; ++k) corpus.examples[order[k]].split = Split::Test;
  return corpus;
}

}  // namespace forge
