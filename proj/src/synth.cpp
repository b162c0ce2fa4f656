#include "forge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "forge/errors.hpp"
#include "forge/text.hpp"

namespace forge {

const std::set<std::string>& SlotDictionary::of(ValueKind kind) const {
  static const std::set<std::string> empty;
  auto it = entries.find(kind);
  return it == entries.end() ? empty : it->second;
}

void SynthConfig::validate() const {
  if (per_example < 1) throw std::invalid_argument("per_example must be >= 1");
  if (!(jitter_relative_bound > 0.0 && jitter_relative_bound < 1.0)) {
    throw std::invalid_argument("jitter_relative_bound must lie in (0, 1)");
  }
}

namespace {

SlotDictionary dictionary_from(const Corpus& corpus, const std::vector<Alignment>& alignments) {
  SlotDictionary dict;
  for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
    if (corpus.examples[i].split != Split::Train) continue;
    for (const auto& v : alignments[i].extract.values) {
      if (v.kind == ValueKind::StringValue || v.kind == ValueKind::RunId || v.kind == ValueKind::TableId) {
        dict.entries[v.kind].insert(v.surface);
      }
    }
  }
  return dict;
}

}  // namespace

SlotDictionary build_slot_dictionary(const Corpus& corpus) {
  if (corpus.split(Split::Train).empty()) throw Error("cannot build a slot dictionary: empty train split");
  return dictionary_from(corpus, align_corpus_serial(corpus));
}

std::string jitter_numeric_at(std::string_view surface, Rng& rng, double bound, int precision) {
  const auto value = parse_number(surface);
  auto kind = classify_value(surface);
  if (!value || (kind != ValueKind::Integer && kind != ValueKind::Float)) {
    throw std::invalid_argument("jitter_numeric: not a numeric surface: " + std::string(surface));
  }
  if (kind == ValueKind::Integer) precision = 0;
  precision = std::max(precision, decimal_places(surface));

  const double unit = std::pow(10.0, -precision);
  const double scale = bound * std::max(std::abs(*value), 1.0);
  const auto center = static_cast<long long>(std::llround(*value / unit));
  auto lo = static_cast<long long>(std::ceil((*value - scale) / unit - 1e-9));
  auto hi = static_cast<long long>(std::floor((*value + scale) / unit + 1e-9));
  const bool negative = surface.front() == '-';
  if (negative) {
    hi = std::min(hi, -1LL);
  } else {
    lo = std::max(lo, 0LL);
  }
  // grid points in [lo, hi] other than the center
  const long long span = hi - lo + 1 - ((center >= lo && center <= hi) ? 1 : 0);
  long long pick;
  if (span <= 0) {
    pick = negative ? center - 1 : center + 1;
  } else {
    pick = lo + static_cast<long long>(rng.below(static_cast<std::size_t>(span)));
    if (center >= lo && pick >= center) ++pick;
  }
  return format_fixed(static_cast<double>(pick) * unit, precision);
}

std::string jitter_numeric(std::string_view surface, Rng& rng, double bound) {
  const auto kind = classify_value(surface);
  if (kind != ValueKind::Integer && kind != ValueKind::Float) {
    throw std::invalid_argument("jitter_numeric: not a numeric surface: " + std::string(surface));
  }
  const int d = decimal_places(surface);
  const int precision = kind == ValueKind::Float ? d + static_cast<int>(rng.below(2)) : 0;
  return jitter_numeric_at(surface, rng, bound, precision);
}

std::string scramble_alnum(std::string_view surface, Rng& rng) {
  if (classify_value(surface) != ValueKind::RunId) {
    throw std::invalid_argument("scramble_alnum: not a run id: " + std::string(surface));
  }
  std::string s(surface);
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::string t = s;
    rng.shuffle(t.begin(), t.end());
    if (t != s && classify_value(t) == ValueKind::RunId) return t;
  }
  std::string t = s;
  std::sort(t.begin(), t.end());
  do {
    if (t != s && classify_value(t) == ValueKind::RunId) return t;
  } while (std::next_permutation(t.begin(), t.end()));
  return s;  // unreachable for run ids: letters and digits always permute to another run id
}

namespace {

struct Replacement {
  std::vector<std::string> from;
  std::vector<std::string> to;
};

class Substituter {
 public:
  explicit Substituter(const std::vector<Replacement>& reps) {
    for (const auto& r : reps) by_first_[r.from.front()].push_back(&r);
    for (auto& [k, list] : by_first_) {
      std::stable_sort(list.begin(), list.end(),
                       [](const Replacement* a, const Replacement* b) { return a->from.size() > b->from.size(); });
    }
  }

  // Greedy longest-first rewrite of one text field.
  std::string apply(const std::string& text) const {
    const auto spans = tokenize_spans(text);
    std::vector<std::string> toks;
    for (const auto& s : spans) toks.push_back(s.text);
    std::vector<Splice> splices;
    std::vector<std::string> expected;
    std::size_t i = 0;
    while (i < toks.size()) {
      const Replacement* hit = nullptr;
      if (auto it = by_first_.find(toks[i]); it != by_first_.end()) {
        for (const auto* r : it->second) {
          if (i + r->from.size() <= toks.size() &&
              std::equal(r->from.begin(), r->from.end(), toks.begin() + static_cast<std::ptrdiff_t>(i))) {
            hit = r;
            break;
          }
        }
      }
      if (!hit) {
        expected.push_back(toks[i]);
        ++i;
        continue;
      }
      splices.push_back({spans[i].begin, spans[i + hit->from.size() - 1].end, join_tokens(hit->to)});
      expected.insert(expected.end(), hit->to.begin(), hit->to.end());
      i += hit->from.size();
    }
    if (splices.empty()) return text;
    return splice_text(text, std::move(splices), expected);
  }

 private:
  std::unordered_map<std::string, std::vector<const Replacement*>> by_first_;
};

bool usable(const std::vector<std::string>& toks, const std::unordered_set<std::string>& forbidden) {
  return std::none_of(toks.begin(), toks.end(), [&](const std::string& t) { return forbidden.count(t) > 0; });
}

std::optional<std::string> draw_from_dictionary(const SlotDictionary& dict, const TypedValue& value,
                                                const std::unordered_set<std::string>& forbidden, Rng& rng) {
  const std::size_t width = value.tokens().size();
  std::vector<const std::string*> eligible;
  for (const auto& s : dict.of(value.kind)) {
    if (s == value.surface) continue;
    auto toks = tokenize(s);
    if (toks.size() != width || !usable(toks, forbidden) || forbidden.count(s)) continue;
    eligible.push_back(&s);
  }
  if (eligible.empty()) return std::nullopt;
  return *eligible[rng.below(eligible.size())];
}

std::optional<std::string> draw_jitter(const TypedValue& value, const std::unordered_set<std::string>& forbidden,
                                       double bound, Rng& rng) {
  for (int attempt = 0; attempt < 16; ++attempt) {
    auto s = jitter_numeric(value.surface, rng, bound);
    if (!forbidden.count(s)) return s;
  }
  if (value.kind == ValueKind::Float) {
    const int finer = decimal_places(value.surface) + 1;
    for (int attempt = 0; attempt < 16; ++attempt) {
      auto s = jitter_numeric_at(value.surface, rng, bound, finer);
      if (!forbidden.count(s)) return s;
    }
  }
  return std::nullopt;
}

std::optional<std::string> draw_scramble(const TypedValue& value, const std::unordered_set<std::string>& forbidden,
                                         Rng& rng) {
  for (int attempt = 0; attempt < 16; ++attempt) {
    auto s = scramble_alnum(value.surface, rng);
    if (s != value.surface && !forbidden.count(s)) return s;
  }
  return std::nullopt;
}

}  // namespace

PairedExample synthesize_pair(const PairedExample& example, const Alignment& alignment,
                              const SlotDictionary& dict, const SynthConfig& config, std::uint64_t stream) {
  PairedExample out = example;
  out.meta["synthetic_source"] = example.id;
  if (alignment.extract.empty()) {
    out.meta["synthetic_unchanged"] = "no matched values";
    return out;
  }

  // Every surface already present in the example is off limits, so a new
  // surface can only appear where its original did.
  std::unordered_set<std::string> forbidden;
  const auto report_spans = tokenize_spans(example.report);
  for (const auto& t : report_spans) forbidden.insert(t.text);
  const TableIndex index(example.tables);
  for (const auto& occ : index.tokens()) forbidden.insert(occ.tokens.front());

  std::vector<Replacement> reps;
  std::unordered_map<std::string, std::size_t> rep_of;
  std::string kept;
  std::size_t j = 0;
  for (const auto& v : alignment.extract.values) {
    if (rep_of.count(v.surface) || v.kind == ValueKind::EmphasisMark) continue;
    Rng rng(derive_seed({stream, j++}));
    std::optional<std::string> to;
    switch (v.kind) {
      case ValueKind::Integer:
      case ValueKind::Float:
        to = draw_jitter(v, forbidden, config.jitter_relative_bound, rng);
        break;
      case ValueKind::StringValue:
      case ValueKind::TableId:
        to = draw_from_dictionary(dict, v, forbidden, rng);
        break;
      case ValueKind::RunId:
        if (rng.coin()) {
          to = draw_scramble(v, forbidden, rng);
          if (!to) to = draw_from_dictionary(dict, v, forbidden, rng);
        } else {
          to = draw_from_dictionary(dict, v, forbidden, rng);
          if (!to) to = draw_scramble(v, forbidden, rng);
        }
        break;
      case ValueKind::EmphasisMark:
        break;
    }
    if (!to) {
      if (!kept.empty()) kept += ' ';
      kept += v.surface;
      continue;
    }
    auto to_tokens = tokenize(*to);
    for (const auto& t : to_tokens) forbidden.insert(t);
    forbidden.insert(*to);
    rep_of[v.surface] = reps.size();
    reps.push_back({v.tokens(), std::move(to_tokens)});
  }
  if (!kept.empty()) out.meta["synthetic_kept"] = kept;
  if (reps.empty()) return out;

  // report: rewrite exactly the aligned spans
  std::vector<Splice> splices;
  std::vector<std::string> expected;
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < alignment.extract.values.size(); ++k) {
    const auto& v = alignment.extract.values[k];
    auto it = rep_of.find(v.surface);
    if (it == rep_of.end()) continue;
    const auto& rep = reps[it->second];
    const std::size_t first = alignment.report_positions[k];
    const std::size_t last = first + rep.from.size() - 1;
    for (; cursor < first; ++cursor) expected.push_back(report_spans[cursor].text);
    splices.push_back({report_spans[first].begin, report_spans[last].end, join_tokens(rep.to)});
    expected.insert(expected.end(), rep.to.begin(), rep.to.end());
    cursor = last + 1;
  }
  for (; cursor < report_spans.size(); ++cursor) expected.push_back(report_spans[cursor].text);
  out.report = splice_text(example.report, std::move(splices), expected);

  const Substituter sub(reps);
  for (auto& table : out.tables) {
    table.table_id = sub.apply(table.table_id);
    table.title = sub.apply(table.title);
    for (auto& col : table.columns) col = sub.apply(col);
    for (auto& row : table.rows) {
      for (auto& cell : row) cell.text = sub.apply(cell.text);
    }
  }
  return out;
}

PairedExample synthesize_pair(const PairedExample& example, const SlotDictionary& dict,
                              const SynthConfig& config, std::uint64_t stream) {
  return synthesize_pair(example, match_values(example), dict, config, stream);
}

namespace {

struct SynthPlan {
  std::vector<std::size_t> train;  // indices into corpus.examples
  std::vector<Alignment> alignments;
  SlotDictionary dict;
};

SynthPlan plan(const Corpus& corpus, const SynthConfig& config, bool parallel) {
  config.validate();
  SynthPlan p;
  p.alignments = parallel ? align_corpus(corpus) : align_corpus_serial(corpus);
  for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
    if (corpus.examples[i].split == Split::Train) p.train.push_back(i);
  }
  p.dict = dictionary_from(corpus, p.alignments);
  return p;
}

PairedExample make_one(const Corpus& corpus, const SynthPlan& p, const SynthConfig& config, std::size_t flat) {
  const std::size_t i = p.train[flat / config.per_example];
  const std::size_t k = flat % config.per_example;
  const auto& ex = corpus.examples[i];
  auto syn = synthesize_pair(ex, p.alignments[i], p.dict, config, derive_seed({config.seed, i, k}));
  syn.id = ex.id + "-syn" + std::to_string(k);
  syn.split = Split::Train;
  return syn;
}

}  // namespace

Corpus generate_synthetic_corpus_serial(const Corpus& corpus, const SynthConfig& config) {
  const auto p = plan(corpus, config, false);
  Corpus out;
  out.provenance = corpus.provenance;
  out.provenance["synthetic_per_example"] = std::to_string(config.per_example);
  out.provenance["synthetic_seed"] = std::to_string(config.seed);
  const std::size_t total = p.train.size() * config.per_example;
  out.examples.reserve(total);
  for (std::size_t f = 0; f < total; ++f) out.examples.push_back(make_one(corpus, p, config, f));
  return out;
}

Corpus generate_synthetic_corpus(const Corpus& corpus, const SynthConfig& config) {
  const auto p = plan(corpus, config, true);
  Corpus out;
  out.provenance = corpus.provenance;
  out.provenance["synthetic_per_example"] = std::to_string(config.per_example);
  out.provenance["synthetic_seed"] = std::to_string(config.seed);
  const std::size_t total = p.train.size() * config.per_example;
  out.examples.resize(total);
  const auto n = static_cast<std::ptrdiff_t>(total);
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t f = 0; f < n; ++f) {
    out.examples[static_cast<std::size_t>(f)] = make_one(corpus, p, config, static_cast<std::size_t>(f));
  }
  return out;
}

}  // namespace forge
