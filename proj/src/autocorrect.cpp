#include "forge/autocorrect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "forge/text.hpp"

namespace forge {

using nlohmann::json;

std::size_t CorrectionMemory::total_weight() const {
  std::size_t w = 0;
  for (const auto& r : rules) w += r.weight;
  return w;
}

std::string_view to_string(EditReason reason) {
  return reason == EditReason::MemoryRule ? "MemoryRule" : "NearestTableValue";
}

namespace {

auto rule_key(const CorrectionRule& r) { return std::tie(r.from, r.to, r.left, r.right); }

bool is_correctable(std::optional<ValueKind> kind) { return kind && *kind != ValueKind::EmphasisMark; }

struct TableValue {
  std::string surface;
  ValueKind kind;
  double number = 0.0;
};

// Distinct single-token values of the tables, flatten order.
std::vector<TableValue> table_values(const TableIndex& index) {
  std::vector<TableValue> out;
  std::unordered_set<std::string> seen;
  for (const auto& occ : index.tokens()) {
    if (occ.tokens.size() != 1 || !seen.insert(occ.tokens.front()).second) continue;
    const auto kind = classify_value(occ.tokens.front());
    if (!is_correctable(kind)) continue;
    TableValue v{occ.tokens.front(), *kind};
    if (*kind == ValueKind::Integer || *kind == ValueKind::Float) v.number = *parse_number(v.surface);
    out.push_back(std::move(v));
  }
  return out;
}

const std::string* nearest_value(std::string_view token, ValueKind kind, std::span<const TableValue> values,
                                 const CorrectorConfig& config) {
  const TableValue* best = nullptr;
  if (kind == ValueKind::Integer || kind == ValueKind::Float) {
    const double x = *parse_number(token);
    double best_diff = 0.0;
    for (const auto& v : values) {
      if (v.kind != kind) continue;
      const double diff = std::fabs(x - v.number);
      if (!best || diff < best_diff) {
        best = &v;
        best_diff = diff;
      }
    }
    if (!best) return nullptr;
    const double scale = std::max(std::fabs(x), std::fabs(best->number));
    if (scale > 0.0 && best_diff / scale > config.numeric_relative_threshold) return nullptr;
    return &best->surface;
  }
  double best_sim = -1.0;
  for (const auto& v : values) {
    if (v.kind != kind) continue;
    const double sim = ro_similarity(token, v.surface);
    if (sim > best_sim) {
      best = &v;
      best_sim = sim;
    }
  }
  if (!best || best_sim < config.string_similarity_threshold) return nullptr;
  return &best->surface;
}

class MemoryLookup {
 public:
  explicit MemoryLookup(const CorrectionMemory& memory) {
    std::unordered_set<std::string> sources;
    for (const auto& r : memory.rules) sources.insert(r.from);
    for (const auto& r : memory.rules) {
      targets_.insert(r.to);
      if (sources.count(r.to)) continue;  // would feed another rule
      by_from_[r.from].push_back(&r);
    }
    for (auto& [from, rules] : by_from_) {
      std::stable_sort(rules.begin(), rules.end(), [](const CorrectionRule* a, const CorrectionRule* b) {
        return a->weight != b->weight ? a->weight > b->weight : a->to < b->to;
      });
    }
  }

  bool is_target(const std::string& token) const { return targets_.count(token) > 0; }

  const CorrectionRule* find(const std::string& token, std::string_view left, std::string_view right,
                             bool allow_context_free) const {
    auto it = by_from_.find(token);
    if (it == by_from_.end()) return nullptr;
    for (const CorrectionRule* r : it->second) {
      if ((!r->left || *r->left == left) && (!r->right || *r->right == right)) return r;
    }
    return allow_context_free ? it->second.front() : nullptr;
  }

 private:
  std::unordered_map<std::string, std::vector<const CorrectionRule*>> by_from_;
  std::unordered_set<std::string> targets_;
};

}  // namespace

CorrectionResult correct_values(std::string_view draft, std::span<const Table> tables,
                                const CorrectionMemory& memory, const CorrectorConfig& config) {
  const TableIndex index(tables);
  const auto values = table_values(index);
  const MemoryLookup lookup(memory);
  const auto spans = tokenize_spans(draft);
  std::vector<std::string> toks;
  toks.reserve(spans.size());
  for (const auto& s : spans) toks.push_back(s.text);

  CorrectionResult result;
  auto edit = [&](std::size_t i, const std::string& to, EditReason reason) {
    result.edits.push_back({i, toks[i], to, reason});
    toks[i] = to;
  };
  // An edited token is a table value or a rule target that feeds no rule,
  // so every position changes at most once and the loop terminates.
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (index.contains(toks[i])) continue;
      const std::string_view left = i ? std::string_view(toks[i - 1]) : kSentenceStart;
      const std::string_view right = i + 1 < toks.size() ? std::string_view(toks[i + 1]) : kSentenceEnd;
      const auto kind = classify_value(toks[i]);
      if (const auto* rule = lookup.find(toks[i], left, right, is_correctable(kind))) {
        edit(i, rule->to, EditReason::MemoryRule);
        changed = true;
      }
    }
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (index.contains(toks[i]) || lookup.is_target(toks[i])) continue;
      const auto kind = classify_value(toks[i]);
      if (!is_correctable(kind)) continue;
      if (const auto* to = nearest_value(toks[i], *kind, values, config)) {
        edit(i, *to, EditReason::NearestTableValue);
        changed = true;
      }
    }
  }

  if (result.edits.empty()) {
    result.text = std::string(draft);
    return result;
  }
  std::vector<Splice> splices;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i] != spans[i].text) splices.push_back({spans[i].begin, spans[i].end, toks[i]});
  }
  result.text = splice_text(draft, std::move(splices), toks);
  return result;
}

CorrectionResult correct_values(const GenerationResult& draft, std::span<const Table> tables,
                                const CorrectionMemory& memory, const CorrectorConfig& config) {
  return correct_values(draft.text, tables, memory, config);
}

std::vector<std::string> apply_edits(std::vector<std::string> tokens, std::span<const Edit> edits) {
  for (const auto& e : edits) {
    if (e.token_index >= tokens.size() || tokens[e.token_index] != e.from) {
      throw Error("edit at token " + std::to_string(e.token_index) + " does not match the text");
    }
    tokens[e.token_index] = e.to;
  }
  return tokens;
}

std::vector<CorrectionRule> learn_corrections(std::string_view draft, std::string_view human) {
  const auto a = tokenize(draft);
  const auto b = tokenize(human);
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      at(i, j) = std::min({at(i - 1, j) + 1, at(i, j - 1) + 1, at(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
  }
  // backtrace preferring the diagonal, so substitutions pair up in place
  std::vector<CorrectionRule> rules;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1)) {
      if (a[i - 1] != b[j - 1] && is_correctable(classify_value(a[i - 1])) &&
          is_correctable(classify_value(b[j - 1]))) {
        CorrectionRule r;
        r.from = a[i - 1];
        r.to = b[j - 1];
        r.left = i >= 2 ? a[i - 2] : std::string(kSentenceStart);
        r.right = i < n ? a[i] : std::string(kSentenceEnd);
        rules.push_back(std::move(r));
      }
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(rules.begin(), rules.end());
  return apply_memory({}, rules).rules;
}

CorrectionMemory apply_memory(CorrectionMemory memory, std::span<const CorrectionRule> rules) {
  auto less = [](const CorrectionRule& x, const CorrectionRule& y) { return rule_key(x) < rule_key(y); };
  for (const auto& r : rules) {
    if (r.from == r.to) throw std::invalid_argument("correction rule maps '" + r.from + "' to itself");
    if (r.weight == 0) throw std::invalid_argument("correction rule with zero weight");
    auto it = std::lower_bound(memory.rules.begin(), memory.rules.end(), r, less);
    if (it != memory.rules.end() && it->same_key(r)) {
      it->weight += r.weight;
    } else {
      memory.rules.insert(it, r);
    }
  }
  return memory;
}

std::string rule_to_line(const CorrectionRule& r) {
  json j = {{"from", r.from}, {"to", r.to}, {"left", nullptr}, {"right", nullptr}, {"weight", r.weight}};
  if (r.left) j["left"] = *r.left;
  if (r.right) j["right"] = *r.right;
  return j.dump();
}

CorrectionRule rule_from_line(std::string_view line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(line_no, "", std::string("malformed JSON: ") + e.what());
  }
  auto text_field = [&](const char* name, bool optional) -> std::optional<std::string> {
    auto it = j.find(name);
    if (it == j.end() || it->is_null()) {
      if (optional) return std::nullopt;
      throw ParseError(line_no, name, std::string("missing field '") + name + "'");
    }
    if (!it->is_string()) throw ParseError(line_no, name, std::string("field '") + name + "' must be a string");
    return it->get<std::string>();
  };
  CorrectionRule r;
  r.from = *text_field("from", false);
  r.to = *text_field("to", false);
  r.left = text_field("left", true);
  r.right = text_field("right", true);
  auto w = j.find("weight");
  if (w == j.end()) {
    r.weight = 1;
  } else if (w->is_number_unsigned() && w->get<std::size_t>() >= 1) {
    r.weight = w->get<std::size_t>();
  } else {
    throw ParseError(line_no, "weight", "field 'weight' must be a positive integer");
  }
  if (r.from == r.to) throw ParseError(line_no, "to", "rule maps '" + r.from + "' to itself");
  return r;
}

CorrectionMemory read_memory(std::istream& in) {
  std::vector<CorrectionRule> rules;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    rules.push_back(rule_from_line(line, line_no));
  }
  return apply_memory({}, rules);
}

CorrectionMemory read_memory_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open memory file " + path.string());
  return read_memory(in);
}

void write_memory(std::ostream& out, const CorrectionMemory& memory) {
  for (const auto& r : memory.rules) out << rule_to_line(r) << '\n';
}

}  // namespace forge
