#include "forge/generate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <unordered_map>

#include <httplib.h>
#include <json.hpp>

#include "forge/preprocess.hpp"
#include "forge/text.hpp"

namespace forge {

namespace {

// Matches over a[a0, a1) x b[b0, b1), memoized on the four bounds.
class RoMatcher {
 public:
  RoMatcher(std::string_view a, std::string_view b) : a_(a), b_(b), run_(b.size() + 1), prev_(b.size() + 1) {}

  std::size_t solve(std::size_t a0, std::size_t a1, std::size_t b0, std::size_t b1) {
    if (a0 >= a1 || b0 >= b1) return 0;
    const std::uint64_t key = a0 | (a1 << 16) | (std::uint64_t(b0) << 32) | (std::uint64_t(b1) << 48);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    // all (start in a, start in b) of the longest common substrings
    std::size_t best = 0;
    std::vector<std::pair<std::size_t, std::size_t>> ties;
    std::fill(prev_.begin() + static_cast<std::ptrdiff_t>(b0), prev_.begin() + static_cast<std::ptrdiff_t>(b1 + 1), 0);
    for (std::size_t i = a0; i < a1; ++i) {
      run_[b0] = 0;
      for (std::size_t j = b0; j < b1; ++j) {
        const std::size_t len = a_[i] == b_[j] ? prev_[j] + 1 : 0;
        run_[j + 1] = len;
        if (len == 0 || len < best) continue;
        if (len > best) {
          best = len;
          ties.clear();
        }
        ties.emplace_back(i + 1 - len, j + 1 - len);
      }
      std::swap(run_, prev_);
    }
    std::size_t total = 0;
    if (best > 0) {
      // the ties' sub-problems may differ, so every choice is tried
      for (const auto& [i, j] : ties) {
        const std::size_t left = solve(a0, i, b0, j);
        const std::size_t right = solve(i + best, a1, j + best, b1);
        total = std::max(total, best + left + right);
        if (memo_.size() >= kRoExactSubproblems) break;
      }
    }
    memo_.emplace(key, total);
    return total;
  }

 private:
  std::string_view a_, b_;
  std::vector<std::size_t> run_, prev_;
  std::unordered_map<std::uint64_t, std::size_t> memo_;
};

}  // namespace

std::size_t ro_matching_characters(std::string_view a, std::string_view b) {
  if (a.size() >= 0xffff || b.size() >= 0xffff) throw std::invalid_argument("ro_similarity: string too long");
  RoMatcher m(a, b);
  return m.solve(0, a.size(), 0, b.size());
}

double ro_similarity(std::string_view a, std::string_view b) {
  if (a.empty() && b.empty()) return 1.0;
  return 2.0 * static_cast<double>(ro_matching_characters(a, b)) / static_cast<double>(a.size() + b.size());
}

namespace {

std::string slot_marker(ValueKind kind, std::size_t index) {
  return "{{" + std::string(to_string(kind)) + "#" + std::to_string(index) + "}}";
}

std::optional<std::size_t> parse_marker(std::string_view tok) {
  if (tok.size() < 6 || !tok.starts_with("{{") || !tok.ends_with("}}")) return std::nullopt;
  auto hash = tok.find('#');
  if (hash == std::string_view::npos) return std::nullopt;
  std::size_t index = 0;
  auto digits = tok.substr(hash + 1, tok.size() - hash - 3);
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
  if (ec != std::errc() || p != digits.data() + digits.size()) return std::nullopt;
  return index;
}

// Tokens found at `pos` in the given tables, or nothing when it does not exist.
std::optional<std::vector<std::string>> tokens_at(const ValueSource& pos, std::span<const Table> tables) {
  if (pos.table >= tables.size()) return std::nullopt;
  const Table& t = tables[pos.table];
  std::vector<std::string> seq;
  switch (pos.region) {
    case Region::TableId: seq = tokenize(t.table_id); break;
    case Region::Title: seq = tokenize(t.title); break;
    case Region::Header:
      if (pos.column < 0 || static_cast<std::size_t>(pos.column) >= t.columns.size()) return std::nullopt;
      seq = header_tokens(t, static_cast<std::size_t>(pos.column));
      break;
    case Region::Body:
      if (pos.row < 0 || static_cast<std::size_t>(pos.row) >= t.rows.size()) return std::nullopt;
      if (pos.column < 0 || static_cast<std::size_t>(pos.column) >= t.rows[static_cast<std::size_t>(pos.row)].size()) {
        return std::nullopt;
      }
      seq = cell_tokens(t.rows[static_cast<std::size_t>(pos.row)][static_cast<std::size_t>(pos.column)]);
      break;
  }
  if (pos.token + pos.length > seq.size()) return std::nullopt;
  return std::vector<std::string>(seq.begin() + static_cast<std::ptrdiff_t>(pos.token),
                                  seq.begin() + static_cast<std::ptrdiff_t>(pos.token + pos.length));
}

std::vector<std::string> split_spaces(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ') ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

Template build_template(const PairedExample& example, const Alignment& alignment) {
  Template t;
  t.source_example_id = example.id;
  t.title_key = example.tables.empty() ? std::string() : example.tables.front().title;
  const auto toks = tokenize(example.report);
  std::vector<std::string> out;
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < alignment.extract.values.size(); ++k) {
    const auto& v = alignment.extract.values[k];
    if (!v.source) continue;
    const std::size_t first = alignment.report_positions[k];
    for (; cursor < first; ++cursor) out.push_back(toks[cursor]);
    out.push_back(slot_marker(v.kind, t.slot_sources.size()));
    t.slot_sources.push_back({*v.source, v.kind});
    cursor = first + v.source->length;
  }
  for (; cursor < toks.size(); ++cursor) out.push_back(toks[cursor]);
  t.text = join_tokens(out);
  return t;
}

std::vector<Template> build_templates(const Corpus& corpus) {
  std::vector<Template> out;
  const auto alignments = align_corpus(corpus);
  for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
    if (corpus.examples[i].split != Split::Train) continue;
    out.push_back(build_template(corpus.examples[i], alignments[i]));
  }
  return out;
}

std::size_t select_template(const Table& table, std::span<const Template> templates) {
  if (templates.empty()) throw std::invalid_argument("select_template: no templates");
  std::size_t best = 0;
  double best_sim = -1.0;
  for (std::size_t i = 0; i < templates.size(); ++i) {
    const double sim = ro_similarity(table.title, templates[i].title_key);
    if (sim > best_sim) {
      best_sim = sim;
      best = i;
    }
  }
  return best;
}

GenerationResult fill_template(const Template& tmpl, std::span<const Table> tables) {
  const std::string title = tables.empty() ? std::string() : tables.front().title;
  const double sim = std::max(ro_similarity(title, tmpl.title_key), kMinSlotConfidence);
  const double degraded = std::max(sim * 0.5, kMinSlotConfidence);
  std::vector<std::string> out;
  GenerationResult result;
  for (const auto& word : split_spaces(tmpl.text)) {
    auto marker = parse_marker(word);
    if (!marker || *marker >= tmpl.slot_sources.size()) {
      out.push_back(word);
      result.token_confidences.push_back(1.0);
      continue;
    }
    const auto& slot = tmpl.slot_sources[*marker];
    auto fill = tokens_at(slot.position, tables);
    if (!fill) {
      out.emplace_back(kMissingToken);
      result.token_confidences.push_back(degraded);
      continue;
    }
    const auto surface = join_tokens(*fill);
    const auto kind = fill->size() > 1 ? std::optional<ValueKind>(ValueKind::StringValue) : classify_value(surface);
    const double conf = kind == slot.kind ? sim : degraded;
    for (auto& tok : *fill) {
      out.push_back(std::move(tok));
      result.token_confidences.push_back(conf);
    }
  }
  result.text = join_tokens(out);
  return result;
}

GenerationResult fill_template(const Template& tmpl, const Table& table) {
  return fill_template(tmpl, std::span<const Table>(&table, 1));
}

std::vector<std::string> assemble_generator_input(std::span<const TableExtract> extracts,
                                                  std::span<const Table> tables) {
  std::vector<std::string> out;
  for (const auto& t : tables) {
    for (auto& tok : tokenize(t.title)) out.push_back(std::move(tok));
  }
  out.emplace_back(kSectionSeparator);
  for (const auto& e : extracts) {
    for (const auto& v : e.values) {
      for (auto& tok : v.tokens()) out.push_back(std::move(tok));
    }
  }
  out.emplace_back(kSectionSeparator);
  for (const auto& t : tables) {
    const std::size_t n = t.rows.size();
    for (std::size_t r = n - std::min<std::size_t>(3, n); r < n; ++r) {
      for (const auto& cell : t.rows[r]) {
        for (auto& tok : cell_tokens(cell)) out.push_back(std::move(tok));
      }
    }
  }
  return out;
}

// --- generators ------------------------------------------------------------

TemplateGenerator::TemplateGenerator(std::vector<Template> templates, bool exclude_own)
    : templates_(std::move(templates)), exclude_own_(exclude_own) {}

GenerationResult TemplateGenerator::generate(const GenerationRequest& request) const {
  if (request.tables.empty()) throw Error("template generator needs the input tables");
  if (!exclude_own_) {
    return fill_template(templates_[select_template(request.tables.front(), templates_)], request.tables);
  }
  std::vector<Template> candidates;
  for (const auto& t : templates_) {
    if (t.source_example_id != request.sample_id) candidates.push_back(t);
  }
  if (candidates.empty()) throw Error("no template left after excluding the sample's own");
  return fill_template(candidates[select_template(request.tables.front(), candidates)], request.tables);
}

HttpGenerator::HttpGenerator(std::string endpoint) {
  constexpr std::string_view scheme = "http://";
  if (!std::string_view(endpoint).starts_with(scheme)) {
    throw std::invalid_argument("generator endpoint must be an http:// URL: " + endpoint);
  }
  std::string rest = endpoint.substr(scheme.size());
  auto slash = rest.find('/');
  std::string authority = rest.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : rest.substr(slash);
  auto colon = authority.rfind(':');
  if (colon != std::string::npos) {
    host_ = authority.substr(0, colon);
    port_ = std::stoi(authority.substr(colon + 1));
  } else {
    host_ = authority;
  }
  if (host_.empty()) throw std::invalid_argument("generator endpoint has no host: " + endpoint);
}

GenerationResult HttpGenerator::generate(const GenerationRequest& request) const {
  using nlohmann::json;
  httplib::Client client(host_, port_);
  client.set_read_timeout(120, 0);
  const json body = {{"sample_id", request.sample_id}, {"tokens", request.tokens}};
  auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) throw Error("generator endpoint unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200) throw Error("generator endpoint returned HTTP " + std::to_string(res->status));
  try {
    const auto j = json::parse(res->body);
    GenerationResult out;
    out.text = j.at("text").get<std::string>();
    out.token_confidences = j.at("token_confidences").get<std::vector<double>>();
    return out;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed generator response: ") + e.what());
  }
}

GeneratorRegistry GeneratorRegistry::with_builtins() {
  GeneratorRegistry r;
  r.add("template", [](const GeneratorOptions& o) -> std::unique_ptr<Generator> {
    if (o.templates.empty()) throw Error("template generator needs at least one train example");
    return std::make_unique<TemplateGenerator>(o.templates, o.exclude_own);
  });
  r.add("http", [](const GeneratorOptions& o) -> std::unique_ptr<Generator> {
    return std::make_unique<HttpGenerator>(o.endpoint);
  });
  return r;
}

void GeneratorRegistry::add(std::string name, Factory factory) { factories_[std::move(name)] = std::move(factory); }

bool GeneratorRegistry::contains(std::string_view name) const { return factories_.find(name) != factories_.end(); }

std::unique_ptr<Generator> GeneratorRegistry::create(std::string_view name, const GeneratorOptions& options) const {
  auto it = factories_.find(name);
  if (it == factories_.end()) throw NotFoundError("unregistered generator '" + std::string(name) + "'");
  return it->second(options);
}

GenerationResult generate(const GenerationRequest& request, const Generator& generator) {
  GenerationResult out;
  try {
    out = generator.generate(request);
  } catch (const GenerationError&) {
    throw;
  } catch (const std::exception& e) {
    throw GenerationError(request.sample_id, e.what());
  }
  const auto n = tokenize(out.text).size();
  if (out.token_confidences.size() != n) {
    throw GenerationError(request.sample_id, "generator returned " + std::to_string(out.token_confidences.size()) +
                                                 " confidences for " + std::to_string(n) + " tokens");
  }
  for (double c : out.token_confidences) {
    if (!(c >= 0.0 && c <= 1.0)) throw GenerationError(request.sample_id, "token confidence outside [0, 1]");
  }
  return out;
}

}  // namespace forge
