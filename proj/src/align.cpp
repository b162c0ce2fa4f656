#include "forge/align.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "forge/text.hpp"

namespace forge {

std::string_view to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::Integer: return "Integer";
    case ValueKind::Float: return "Float";
    case ValueKind::RunId: return "RunId";
    case ValueKind::StringValue: return "StringValue";
    case ValueKind::TableId: return "TableId";
    case ValueKind::EmphasisMark: return "EmphasisMark";
  }
  return "StringValue";
}

std::optional<ValueKind> value_kind_from_string(std::string_view name) {
  for (auto k : kAllValueKinds) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

namespace {

constexpr const char* kClosedClass[] = {
    "a", "about", "above", "across", "after", "against", "all", "along", "also", "although",
    "among", "an", "and", "another", "any", "are", "as", "at", "be", "because", "been",
    "before", "being", "below", "between", "both", "but", "by", "can", "could", "did", "do",
    "does", "during", "each", "either", "every", "few", "for", "from", "had", "has", "have",
    "he", "her", "here", "hers", "him", "his", "how", "however", "i", "if", "in", "into", "is",
    "it", "its", "last", "less", "many", "may", "more", "most", "much", "must", "my", "neither",
    "no", "nor", "not", "of", "off", "on", "once", "only", "or", "other", "our", "out", "over",
    "per", "same", "several", "shall", "she", "should", "since", "so", "some", "such", "than",
    "that", "the", "their", "them", "then", "there", "these", "they", "this", "those", "though",
    "through", "thus", "to", "too", "under", "until", "up", "upon", "us", "very", "via", "was",
    "we", "were", "what", "when", "where", "whereas", "whether", "which", "while", "who",
    "whom", "whose", "why", "will", "with", "within", "without", "would", "yet", "you", "your",
};

constexpr const char* kAbbreviations[] = {
    "pH", "mRNA", "miRNA", "siRNA", "cDNA", "gDNA", "qPCR", "iPSC", "pAb", "mAb", "sCD4",
};

bool all_of_chars(std::string_view s, bool (*pred)(char)) {
  return !s.empty() && std::all_of(s.begin(), s.end(), pred);
}

bool is_word_char(char c) { return is_ascii_alpha(c) || static_cast<unsigned char>(c) >= 0x80; }
bool is_alnum_char(char c) { return is_ascii_alpha(c) || is_ascii_digit(c); }

bool unsigned_numeral(std::string_view s, bool* is_float) {
  auto dot = s.find('.');
  if (dot == std::string_view::npos) {
    *is_float = false;
    return all_of_chars(s, is_ascii_digit);
  }
  *is_float = true;
  return all_of_chars(s.substr(0, dot), is_ascii_digit) &&
         all_of_chars(s.substr(dot + 1), is_ascii_digit);
}

}  // namespace

Lexicon::Lexicon() {
  for (const char* w : kClosedClass) stopwords_.insert(w);
  for (const char* w : kAbbreviations) abbreviations_.insert(w);
}

const Lexicon& Lexicon::standard() {
  static const Lexicon lexicon;
  return lexicon;
}

Lexicon Lexicon::from_corpus(const Corpus& corpus, std::size_t top_k) {
  Lexicon lex;
  std::unordered_set<std::string> table_tokens;
  std::map<std::string, std::size_t> counts;
  for (const auto& ex : corpus.examples) {
    TableIndex index(ex.tables, lex);
    for (const auto& occ : index.tokens()) {
      for (const auto& t : occ.tokens) table_tokens.insert(t);
    }
    for (const auto& tok : tokenize(ex.report)) {
      if (all_of_chars(tok, [](char c) { return c >= 'a' && c <= 'z'; })) ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::size_t added = 0;
  for (const auto& [tok, n] : ranked) {
    if (added == top_k) break;
    ++added;
    if (table_tokens.count(tok)) continue;
    lex.stopwords_.insert(tok);
  }
  return lex;
}

bool Lexicon::is_stopword(std::string_view token) const {
  return stopwords_.count(to_lower_ascii(token)) > 0;
}

bool Lexicon::is_abbreviation(std::string_view token) const {
  return abbreviations_.count(std::string(token)) > 0;
}

std::optional<ValueKind> classify_value(std::string_view token) {
  return classify_value(token, Lexicon::standard());
}

std::optional<ValueKind> classify_value(std::string_view tok, const Lexicon& lexicon) {
  if (tok.empty()) return std::nullopt;
  if (all_of_chars(tok, [](char c) { return c == '*'; })) return ValueKind::EmphasisMark;

  std::string_view unsigned_part = tok.front() == '-' ? tok.substr(1) : tok;
  bool is_float = false;
  if (unsigned_numeral(unsigned_part, &is_float)) {
    return is_float ? ValueKind::Float : ValueKind::Integer;
  }

  if (tok.size() >= 6 && to_lower_ascii(tok.substr(0, 5)) == "table" && is_ascii_digit(tok[5]) &&
      all_of_chars(tok.substr(5), is_alnum_char)) {
    return ValueKind::TableId;
  }

  if (all_of_chars(tok, is_alnum_char) && std::any_of(tok.begin(), tok.end(), is_ascii_digit) &&
      std::any_of(tok.begin(), tok.end(), is_ascii_alpha)) {
    return ValueKind::RunId;
  }

  if (lexicon.is_abbreviation(tok)) return ValueKind::StringValue;

  if (tok.front() >= 'A' && tok.front() <= 'Z' && all_of_chars(tok, is_word_char) &&
      !lexicon.is_stopword(tok)) {
    return ValueKind::StringValue;
  }
  return std::nullopt;
}

std::vector<std::string> TypedValue::tokens() const { return tokenize(surface); }

std::vector<std::string> TableExtract::surfaces() const {
  std::vector<std::string> out;
  out.reserve(values.size());
  for (const auto& v : values) out.push_back(v.surface);
  return out;
}

std::vector<std::string> cell_tokens(const Cell& cell) {
  auto toks = tokenize(cell.text);
  if (cell.emphasis > 0) toks.emplace_back(static_cast<std::size_t>(cell.emphasis), '*');
  return toks;
}

std::vector<std::string> header_tokens(const Table& table, std::size_t column) {
  auto toks = tokenize(table.columns.at(column));
  if (int e = table.header_emphasis(column); e > 0) toks.emplace_back(static_cast<std::size_t>(e), '*');
  return toks;
}

TableIndex::TableIndex(std::span<const Table> tables, const Lexicon& lexicon) {
  auto add_sequence = [&](const std::vector<std::string>& toks, ValueSource base) {
    for (std::size_t k = 0; k < toks.size(); ++k) {
      ValueSource src = base;
      src.token = k;
      src.length = 1;
      tokens_.push_back({{toks[k]}, src});
      first_.emplace(toks[k], src);
    }
    std::size_t k = 0;
    while (k < toks.size()) {
      if (classify_value(toks[k], lexicon) != ValueKind::StringValue) {
        ++k;
        continue;
      }
      std::size_t end = k;
      while (end < toks.size() && classify_value(toks[end], lexicon) == ValueKind::StringValue) ++end;
      if (end - k >= 2) {
        ValueSource src = base;
        src.token = k;
        src.length = end - k;
        concepts_[toks[k]].push_back(
            {std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(k),
                                      toks.begin() + static_cast<std::ptrdiff_t>(end)),
             src});
      }
      k = end;
    }
  };

  for (std::size_t t = 0; t < tables.size(); ++t) {
    const Table& table = tables[t];
    add_sequence(tokenize(table.table_id), {t, Region::TableId, -1, -1, 0, 1});
    add_sequence(tokenize(table.title), {t, Region::Title, -1, -1, 0, 1});
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      add_sequence(header_tokens(table, c), {t, Region::Header, -1, static_cast<int>(c), 0, 1});
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      for (std::size_t c = 0; c < table.rows[r].size(); ++c) {
        add_sequence(cell_tokens(table.rows[r][c]),
                     {t, Region::Body, static_cast<int>(r), static_cast<int>(c), 0, 1});
      }
    }
  }
  for (auto& [first, list] : concepts_) {
    std::stable_sort(list.begin(), list.end(), [](const Occurrence& a, const Occurrence& b) {
      return a.tokens.size() > b.tokens.size();
    });
  }
}

std::optional<ValueSource> TableIndex::find(std::string_view token) const {
  auto it = first_.find(std::string(token));
  if (it == first_.end()) return std::nullopt;
  return it->second;
}

const TableIndex::Occurrence* TableIndex::longest_concept(std::span<const std::string> tokens,
                                                          std::size_t pos) const {
  auto it = concepts_.find(tokens[pos]);
  if (it == concepts_.end()) return nullptr;
  for (const auto& occ : it->second) {
    if (pos + occ.tokens.size() > tokens.size()) continue;
    if (std::equal(occ.tokens.begin(), occ.tokens.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos))) {
      return &occ;
    }
  }
  return nullptr;
}

Alignment match_values(std::span<const Table> tables, std::string_view report, const Lexicon& lexicon) {
  const TableIndex index(tables, lexicon);
  const auto toks = tokenize(report);
  Alignment out;
  std::size_t i = 0;
  while (i < toks.size()) {
    if (const auto* concept_occ = index.longest_concept(toks, i)) {
      out.extract.values.push_back(
          {join_tokens(concept_occ->tokens), ValueKind::StringValue, concept_occ->source});
      out.report_positions.push_back(i);
      i += concept_occ->tokens.size();
      continue;
    }
    if (auto kind = classify_value(toks[i], lexicon)) {
      if (auto src = index.find(toks[i])) {
        out.extract.values.push_back({toks[i], *kind, *src});
        out.report_positions.push_back(i);
      }
    }
    ++i;
  }
  return out;
}

Alignment match_values(const PairedExample& example, const Lexicon& lexicon) {
  return match_values(example.tables, example.report, lexicon);
}

double difficulty_score(const PairedExample& example, const Alignment& alignment) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : alignment.extract.values) {
    if (!v.source || v.source->region != Region::Body) continue;
    const auto& table = example.tables.at(v.source->table);
    sum += static_cast<double>(v.source->row + 1) / static_cast<double>(table.rows.size());
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

std::vector<PairedExample> select_curriculum(const Corpus& corpus, std::size_t count) {
  auto train = corpus.split(Split::Train);
  if (count > train.size()) throw std::invalid_argument("curriculum count exceeds train split size");
  std::vector<std::pair<double, const PairedExample*>> scored;
  scored.reserve(train.size());
  for (const auto* ex : train) scored.emplace_back(difficulty_score(*ex, match_values(*ex)), ex);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second->id < b.second->id;
  });
  std::vector<PairedExample> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back(*scored[k].second);
  return out;
}

std::vector<Alignment> align_corpus_serial(const Corpus& corpus) {
  std::vector<Alignment> out;
  out.reserve(corpus.examples.size());
  for (const auto& ex : corpus.examples) out.push_back(match_values(ex));
  return out;
}

std::vector<Alignment> align_corpus(const Corpus& corpus) {
  const auto n = static_cast<std::ptrdiff_t>(corpus.examples.size());
  std::vector<Alignment> out(corpus.examples.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = match_values(corpus.examples[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace forge
