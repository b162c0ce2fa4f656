#include "forge/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <iterator>
#include <map>
#include <optional>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#include "forge/errors.hpp"
#include "forge/text.hpp"

namespace forge {

void FlattenLimits::validate() const {
  if (max_rows < 1) throw std::invalid_argument("max_rows must be >= 1");
  if (max_tokens_per_row < 1) throw std::invalid_argument("max_tokens_per_row must be >= 1");
  if (!(coverage_target > 0.0 && coverage_target <= 1.0)) {
    throw std::invalid_argument("coverage_target must lie in (0, 1]");
  }
}

FlatTable flatten_table(const Table& table, const FlattenLimits& limits) {
  limits.validate();
  FlatTable flat;
  auto push = [&](std::vector<std::string> toks, int row, int column) {
    for (std::size_t k = 0; k < toks.size(); ++k) {
      flat.tokens.push_back(std::move(toks[k]));
      flat.source_map.push_back({row, column, k});
    }
  };
  push(tokenize(table.title), kHeaderRow, -1);
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    push(header_tokens(table, c), kHeaderRow, static_cast<int>(c));
  }
  const std::size_t rows = std::min(table.rows.size(), limits.max_rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t budget = limits.max_tokens_per_row;
    for (std::size_t c = 0; c < table.rows[r].size() && budget > 0; ++c) {
      auto toks = cell_tokens(table.rows[r][c]);
      if (toks.size() > budget) toks.resize(budget);
      budget -= toks.size();
      push(std::move(toks), static_cast<int>(r), static_cast<int>(c));
    }
  }
  return flat;
}

FlatTable dedup_consecutive(const FlatTable& flat) {
  std::map<std::tuple<int, int, std::size_t>, const std::string*> by_pos;
  for (std::size_t i = 0; i < flat.tokens.size(); ++i) {
    const auto& p = flat.source_map[i];
    if (p.row >= 0) by_pos[{p.row, p.column, p.offset}] = &flat.tokens[i];
  }
  FlatTable out;
  for (std::size_t i = 0; i < flat.tokens.size(); ++i) {
    const auto& p = flat.source_map[i];
    if (p.row > 0) {
      auto it = by_pos.find({p.row - 1, p.column, p.offset});
      if (it != by_pos.end() && *it->second == flat.tokens[i]) continue;
    }
    out.tokens.push_back(flat.tokens[i]);
    out.source_map.push_back(p);
  }
  return out;
}

Table propagate_markup(Table table) {
  const bool had_header_emphasis = !table.column_emphasis.empty();
  if (table.column_emphasis.size() != table.columns.size()) {
    table.column_emphasis.resize(table.columns.size(), 0);
  }
  for (auto& row : table.rows) {
    bool any = false;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (row[c].emphasis > 0) {
        any = true;
        table.column_emphasis[c] = std::max(table.column_emphasis[c], 1);
      }
    }
    if (any && !row.empty()) {
      row[0].emphasis = std::max(row[0].emphasis, 1);
      table.column_emphasis[0] = std::max(table.column_emphasis[0], 1);
    }
  }
  if (!had_header_emphasis &&
      std::all_of(table.column_emphasis.begin(), table.column_emphasis.end(),
                  [](int e) { return e == 0; })) {
    table.column_emphasis.clear();
  }
  return table;
}

// --- aggregate rules -------------------------------------------------------

namespace {

std::size_t column_index(const Table& t, const std::string& name) {
  auto it = std::find(t.columns.begin(), t.columns.end(), name);
  if (it == t.columns.end()) {
    throw Error("aggregate rule references unknown column '" + name + "' in table " + t.table_id);
  }
  return static_cast<std::size_t>(it - t.columns.begin());
}

std::optional<double> numeric(const Cell& c) {
  auto toks = tokenize(c.text);
  if (toks.size() != 1) return std::nullopt;
  return parse_number(toks[0]);
}

[[noreturn]] void non_numeric(const Table& t, std::size_t r, std::size_t c) {
  throw Error("non-numeric cell at row " + std::to_string(r) + ", column '" + t.columns[c] +
              "' in table " + t.table_id);
}

// Numeric target columns for the rows in `rows`.
std::vector<bool> numeric_targets(const Table& t, const AggregateRule& rule, std::size_t group_col,
                                  const std::vector<std::size_t>& rows) {
  std::vector<bool> target(t.columns.size(), false);
  if (!rule.columns.empty()) {
    for (const auto& name : rule.columns) {
      const auto c = column_index(t, name);
      for (auto r : rows) {
        if (!numeric(t.rows[r][c])) non_numeric(t, r, c);
      }
      target[c] = true;
    }
    return target;
  }
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    if (c == group_col) continue;
    target[c] = std::all_of(rows.begin(), rows.end(), [&](std::size_t r) { return numeric(t.rows[r][c]).has_value(); });
  }
  return target;
}

std::string format_like(double value, int decimals) {
  // Keep the inputs' precision; one extra digit when that would hide the result.
  const double scale = std::pow(10.0, decimals);
  if (std::abs(std::round(value * scale) - value * scale) > 1e-9) ++decimals;
  return format_fixed(value, decimals);
}

Table group_mean(const Table& t, const AggregateRule& rule) {
  const auto g = column_index(t, rule.group_column);
  std::vector<std::string> keys;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& key = t.rows[r][g].text;
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(r);
  }
  Table out = t;
  out.rows.clear();
  for (const auto& key : keys) {
    const auto& members = groups[key];
    const auto target = numeric_targets(t, rule, g, members);
    std::vector<Cell> row = t.rows[members.front()];
    for (std::size_t c = 0; c < row.size(); ++c) {
      int emphasis = 0;
      for (auto r : members) emphasis = std::max(emphasis, t.rows[r][c].emphasis);
      row[c].emphasis = emphasis;
      if (!target[c]) continue;
      double sum = 0.0;
      int decimals = 0;
      for (auto r : members) {
        sum += *numeric(t.rows[r][c]);
        decimals = std::max(decimals, decimal_places(tokenize(t.rows[r][c].text)[0]));
      }
      row[c].text = format_like(sum / static_cast<double>(members.size()), decimals);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

Table control_difference(const Table& t, const AggregateRule& rule) {
  const auto g = column_index(t, rule.group_column);
  std::optional<std::size_t> control;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r][g].text == rule.control) {
      control = r;
      break;
    }
  }
  if (!control) {
    throw Error("control group '" + rule.control + "' not found in table " + t.table_id);
  }
  Table out = t;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (r == *control) continue;
    const auto target = numeric_targets(t, rule, g, {r, *control});
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      if (!target[c]) continue;
      const auto& exp_cell = t.rows[r][c];
      const auto& ctl_cell = t.rows[*control][c];
      const int decimals = std::max(decimal_places(tokenize(exp_cell.text)[0]),
                                    decimal_places(tokenize(ctl_cell.text)[0]));
      out.rows[r][c].text = format_fixed(*numeric(exp_cell) - *numeric(ctl_cell), decimals);
    }
  }
  return out;
}

}  // namespace

std::vector<AggregateRule> parse_aggregate_rules(std::istream& in) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(0, "", std::string("malformed rules file: ") + e.what());
  }
  if (!j.is_array()) throw ParseError(0, "<root>", "rules file must hold an array");
  std::vector<AggregateRule> rules;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path = "[" + std::to_string(i) + "]";
    const auto& r = j[i];
    AggregateRule rule;
    const auto kind = r.value("kind", "");
    if (kind == "GroupMean") {
      rule.kind = AggregateKind::GroupMean;
    } else if (kind == "ControlDifference") {
      rule.kind = AggregateKind::ControlDifference;
    } else {
      throw ParseError(0, path + ".kind", "field '" + path + ".kind': unknown rule kind '" + kind + "'");
    }
    const auto params = r.value("parameters", json::object());
    rule.group_column = params.value("group_column", "");
    if (rule.group_column.empty()) {
      throw ParseError(0, path + ".parameters.group_column", "missing field '" + path + ".parameters.group_column'");
    }
    rule.control = params.value("control", "");
    if (rule.kind == AggregateKind::ControlDifference && rule.control.empty()) {
      throw ParseError(0, path + ".parameters.control", "missing field '" + path + ".parameters.control'");
    }
    rule.columns = params.value("columns", std::vector<std::string>{});
    rules.push_back(std::move(rule));
  }
  return rules;
}

Table apply_aggregate_rules(const Table& table, std::span<const AggregateRule> rules) {
  Table t = table;
  for (const auto& rule : rules) {
    t = rule.kind == AggregateKind::GroupMean ? group_mean(t, rule) : control_difference(t, rule);
  }
  return t;
}

// --- calibration -----------------------------------------------------------

namespace {

struct MatchDepth {
  bool body = false;
  std::size_t row = 0;
  std::size_t last_token = 0;  // index within the flattened row of the value's last token
};

std::vector<MatchDepth> matched_depths(const Corpus& corpus) {
  std::vector<MatchDepth> out;
  for (const auto* ex : corpus.split(Split::Train)) {
    const auto alignment = match_values(*ex);
    for (const auto& v : alignment.extract.values) {
      MatchDepth d;
      if (v.source && v.source->region == Region::Body) {
        const auto& row = ex->tables[v.source->table].rows[static_cast<std::size_t>(v.source->row)];
        std::size_t before = 0;
        for (int c = 0; c < v.source->column; ++c) before += cell_tokens(row[static_cast<std::size_t>(c)]).size();
        d.body = true;
        d.row = static_cast<std::size_t>(v.source->row);
        d.last_token = before + v.source->token + v.source->length - 1;
      }
      out.push_back(d);
    }
  }
  return out;
}

std::size_t covered(const std::vector<MatchDepth>& depths, std::size_t rows, std::size_t tokens) {
  return static_cast<std::size_t>(std::count_if(depths.begin(), depths.end(), [&](const MatchDepth& d) {
    return !d.body || (d.row < rows && d.last_token < tokens);
  }));
}

}  // namespace

double limit_coverage(const Corpus& corpus, const FlattenLimits& limits) {
  const auto depths = matched_depths(corpus);
  if (depths.empty()) return 0.0;
  return static_cast<double>(covered(depths, limits.max_rows, limits.max_tokens_per_row)) /
         static_cast<double>(depths.size());
}

FlattenLimits calibrate_limits(const Corpus& corpus, double coverage_target) {
  if (!(coverage_target > 0.0 && coverage_target <= 1.0)) {
    throw std::invalid_argument("coverage_target must lie in (0, 1]");
  }
  const auto depths = matched_depths(corpus);
  if (depths.empty()) throw Error("no table values matched in any train report; cannot calibrate limits");

  const double total = static_cast<double>(depths.size());
  auto reaches = [&](std::size_t n) { return static_cast<double>(n) >= coverage_target * total - 1e-9; };

  std::size_t deepest_row = 0, widest = 0;
  for (const auto& d : depths) {
    if (!d.body) continue;
    deepest_row = std::max(deepest_row, d.row + 1);
    widest = std::max(widest, d.last_token + 1);
  }
  const std::size_t unbounded = std::max<std::size_t>(widest, 1);

  FlattenLimits limits;
  limits.coverage_target = coverage_target;
  limits.max_rows = std::max<std::size_t>(deepest_row, 1);
  for (std::size_t r = 1; r <= std::max<std::size_t>(deepest_row, 1); ++r) {
    if (reaches(covered(depths, r, unbounded))) {
      limits.max_rows = r;
      break;
    }
  }
  limits.max_tokens_per_row = unbounded;
  for (std::size_t t = 1; t <= unbounded; ++t) {
    if (reaches(covered(depths, limits.max_rows, t))) {
      limits.max_tokens_per_row = t;
      break;
    }
  }
  return limits;
}

}  // namespace forge
