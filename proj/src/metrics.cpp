#include "forge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "forge/text.hpp"

namespace forge {

namespace {

using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts count_ngrams(Tokens seq, std::size_t n) {
  NgramCounts counts;
  if (seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    std::string key = seq[i];
    for (std::size_t k = 1; k < n; ++k) {
      key.push_back('\x1f');
      key += seq[i + k];
    }
    ++counts[key];
  }
  return counts;
}

std::size_t clipped_overlap(const NgramCounts& cand, const NgramCounts& ref) {
  std::size_t m = 0;
  for (const auto& [gram, c] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

double f1(double overlap, double cand_total, double ref_total) {
  if (overlap <= 0.0) return 0.0;
  const double p = overlap / cand_total, r = overlap / ref_total;
  return 2.0 * p * r / (p + r);
}

std::vector<std::vector<std::string>> unique_surface_tokens(const TableExtract& extract, bool lower) {
  std::vector<std::vector<std::string>> out;
  std::unordered_set<std::string> seen;
  for (const auto& v : extract.values) {
    std::string s = lower ? to_lower_ascii(v.surface) : v.surface;
    if (seen.insert(s).second) out.push_back(tokenize(s));
  }
  return out;
}

}  // namespace

double table_recall(const TableExtract& extract, std::string_view text, bool case_sensitive) {
  const auto uniques = unique_surface_tokens(extract, !case_sensitive);
  if (uniques.empty()) return 1.0;
  const auto toks = tokenize(case_sensitive ? std::string(text) : to_lower_ascii(text));
  std::size_t found = 0;
  for (const auto& u : uniques) {
    if (u.empty()) continue;
    if (std::search(toks.begin(), toks.end(), u.begin(), u.end()) != toks.end()) ++found;
  }
  return static_cast<double>(found) / static_cast<double>(uniques.size());
}

TableExtract restore_extract(std::string_view text, const TableExtract& reference) {
  // first token -> (surface tokens, reference value), longest surfaces first
  std::unordered_map<std::string, std::vector<std::pair<std::vector<std::string>, const TypedValue*>>> by_first;
  std::unordered_set<std::string> seen;
  for (const auto& v : reference.values) {
    if (!seen.insert(v.surface).second) continue;
    auto toks = v.tokens();
    if (toks.empty()) continue;
    by_first[toks.front()].emplace_back(std::move(toks), &v);
  }
  for (auto& [first, options] : by_first) {
    std::stable_sort(options.begin(), options.end(),
                     [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
  }
  const auto toks = tokenize(text);
  TableExtract out;
  std::size_t i = 0;
  while (i < toks.size()) {
    auto it = by_first.find(toks[i]);
    std::size_t advance = 1;
    if (it != by_first.end()) {
      for (const auto& [surface, value] : it->second) {
        if (i + surface.size() <= toks.size() && std::equal(surface.begin(), surface.end(), toks.begin() + i)) {
          out.values.push_back(*value);
          advance = surface.size();
          break;
        }
      }
    }
    i += advance;
  }
  return out;
}

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (std::size_t n = 0; n < 4; ++n) {
    matches[n] += o.matches[n];
    totals[n] += o.totals[n];
  }
  candidate_length += o.candidate_length;
  reference_length += o.reference_length;
  return *this;
}

BleuStats bleu_stats(Tokens candidate, Tokens reference) {
  BleuStats s;
  s.candidate_length = candidate.size();
  s.reference_length = reference.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto c = count_ngrams(candidate, n);
    s.matches[n - 1] = clipped_overlap(c, count_ngrams(reference, n));
    s.totals[n - 1] = candidate.size() >= n ? candidate.size() - n + 1 : 0;
  }
  return s;
}

double bleu_score(const BleuStats& s) {
  if (s.candidate_length == 0 || s.matches[0] == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    double p;
    if (s.matches[n] > 0) {
      p = static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]);
    } else {
      p = 1.0 / static_cast<double>(s.totals[n] + 1);
    }
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(s.candidate_length), r = static_cast<double>(s.reference_length);
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

double bleu(Tokens candidate, Tokens reference) { return bleu_score(bleu_stats(candidate, reference)); }

std::vector<std::string> extract_units(const TableExtract& extract) { return extract.surfaces(); }

BleuStats bleu_extract_stats(std::string_view generated, const TableExtract& reference) {
  const auto restored = extract_units(restore_extract(generated, reference));
  const auto ref = extract_units(reference);
  return bleu_stats(restored, ref);
}

double bleu_extract(std::string_view generated, const TableExtract& reference) {
  return bleu_score(bleu_extract_stats(generated, reference));
}

std::size_t lcs_length(Tokens a, Tokens b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge(Tokens candidate, Tokens reference, RougeVariant variant) {
  if (variant == RougeVariant::RL) {
    if (candidate.empty() && reference.empty()) return 1.0;
    return f1(static_cast<double>(lcs_length(candidate, reference)), static_cast<double>(candidate.size()),
              static_cast<double>(reference.size()));
  }
  const std::size_t n = variant == RougeVariant::R1 ? 1 : 2;
  const std::size_t ct = candidate.size() >= n ? candidate.size() - n + 1 : 0;
  const std::size_t rt = reference.size() >= n ? reference.size() - n + 1 : 0;
  if (ct == 0 && rt == 0) return std::equal(candidate.begin(), candidate.end(), reference.begin(), reference.end());
  const auto overlap = clipped_overlap(count_ngrams(candidate, n), count_ngrams(reference, n));
  return f1(static_cast<double>(overlap), static_cast<double>(ct), static_cast<double>(rt));
}

std::size_t edit_distance(Tokens a, Tokens b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace {

constexpr std::size_t kMaxShifts = 50;
constexpr std::size_t kMaxShiftLength = 10;
constexpr std::size_t kMaxShiftDistance = 50;
constexpr std::size_t kExactShiftSearchLength = 8;

using Ids = std::vector<int>;

// Returns min(distance, cap); rows whose minimum reaches `cap` stop early.
std::size_t ids_distance(std::span<const int> a, std::span<const int> b,
                         std::size_t cap = std::numeric_limits<std::size_t>::max()) {
  std::size_t stack[2][64];
  std::vector<std::size_t> heap;
  std::size_t *prev = stack[0], *cur = stack[1];
  if (b.size() >= 64) {
    heap.resize(2 * (b.size() + 1));
    prev = heap.data();
    cur = prev + b.size() + 1;
  }
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    std::size_t row_min = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
      row_min = std::min(row_min, cur[j]);
    }
    if (row_min >= cap) return cap;
    std::swap(prev, cur);
  }
  return std::min(cap, prev[b.size()]);
}

// Open-addressing set of packed states; ~0 marks an empty slot and is never
// a valid state because packed states use at most 32 bits.
class PackedSet {
 public:
  bool insert(std::uint64_t key) {
    if (2 * (size_ + 1) > slots_.size()) grow();
    for (std::size_t h = mix(key) & (slots_.size() - 1);; h = (h + 1) & (slots_.size() - 1)) {
      if (slots_[h] == key) return false;
      if (slots_[h] == kEmpty) {
        slots_[h] = key;
        ++size_;
        return true;
      }
    }
  }

 private:
  static constexpr std::uint64_t kEmpty = ~std::uint64_t{0};
  static std::size_t mix(std::uint64_t x) {
    x ^= x >> 29;
    x *= 0xbf58476d1ce4e5b9ULL;
    return static_cast<std::size_t>(x ^ (x >> 32));
  }
  void grow() {
    std::vector<std::uint64_t> old(std::max<std::size_t>(64, 2 * slots_.size()), kEmpty);
    old.swap(slots_);
    size_ = 0;
    for (auto k : old) {
      if (k != kEmpty) insert(k);
    }
  }
  std::vector<std::uint64_t> slots_;
  std::size_t size_ = 0;
};

// pos[j]: index of `cur` that a minimal edit path aligns ref[j] with; for a
// ref token the path inserts, the index it is inserted before.
std::vector<std::size_t> aligned_positions(const Ids& cur, const Ids& ref) {
  const std::size_t n = cur.size(), m = ref.size(), w = m + 1;
  std::vector<std::size_t> d((n + 1) * w);
  for (std::size_t j = 0; j <= m; ++j) d[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    d[i * w] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      d[i * w + j] = std::min({d[(i - 1) * w + j] + 1, d[i * w + j - 1] + 1,
                               d[(i - 1) * w + j - 1] + (cur[i - 1] == ref[j - 1] ? 0 : 1)});
    }
  }
  std::vector<std::size_t> pos(m);
  for (std::size_t i = n, j = m; j > 0;) {
    if (i > 0 && d[i * w + j] == d[(i - 1) * w + j - 1] + (cur[i - 1] == ref[j - 1] ? 0 : 1)) {
      pos[--j] = --i;
    } else if (i > 0 && d[i * w + j] == d[(i - 1) * w + j] + 1) {
      --i;
    } else {
      pos[--j] = i;
    }
  }
  return pos;
}

// Greedy best-first shifting. As in TERCOM, a block of `cur` is only moved
// to where an occurrence of it in `ref` is currently aligned.
std::size_t greedy_ter(Ids cur, const Ids& ref) {
  std::size_t cost = ids_distance(cur, ref);
  std::size_t shifts = 0;
  Ids best_seq, moved;
  while (shifts < kMaxShifts && cost > 0) {
    const auto pos = aligned_positions(cur, ref);
    const std::size_t n = cur.size();
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t len = 1; len <= kMaxShiftLength && i + len <= n; ++len) {
        bool occurs = false;
        for (std::size_t j = 0; j + len <= ref.size(); ++j) {
          if (!std::equal(cur.begin() + static_cast<std::ptrdiff_t>(i),
                          cur.begin() + static_cast<std::ptrdiff_t>(i + len),
                          ref.begin() + static_cast<std::ptrdiff_t>(j))) {
            continue;
          }
          occurs = true;
          const std::size_t p = pos[j];
          if (p >= i && p <= i + len) continue;  // already in place
          // insertion point once the block is cut out
          const std::size_t k = p < i ? p : p - len;
          if ((k > i ? k - i : i - k) > kMaxShiftDistance) continue;
          moved.assign(cur.begin(), cur.begin() + static_cast<std::ptrdiff_t>(i));
          moved.insert(moved.end(), cur.begin() + static_cast<std::ptrdiff_t>(i + len), cur.end());
          moved.insert(moved.begin() + static_cast<std::ptrdiff_t>(k), cur.begin() + static_cast<std::ptrdiff_t>(i),
                       cur.begin() + static_cast<std::ptrdiff_t>(i + len));
          const std::size_t e = ids_distance(moved, ref, best);
          if (e < best) {
            best = e;
            best_seq = moved;
          }
        }
        if (!occurs) break;  // longer blocks contain this one
      }
    }
    if (best == std::numeric_limits<std::size_t>::max() || best + 1 >= cost) break;
    cur.swap(best_seq);
    cost = best;
    ++shifts;
  }
  return shifts + cost;
}

// Shifts never change the token multiset, so edits >= this bound.
std::size_t multiset_bound(const Ids& a, const Ids& b) {
  // ids are dense from interning
  int top = 0;
  for (int x : a) top = std::max(top, x);
  for (int x : b) top = std::max(top, x);
  std::vector<long> balance(static_cast<std::size_t>(top) + 1, 0);
  for (int x : a) ++balance[static_cast<std::size_t>(x)];
  std::size_t common = 0;
  for (int x : b) {
    if (balance[static_cast<std::size_t>(x)]-- > 0) ++common;
  }
  return std::max(a.size(), b.size()) - common;
}

// Level-order search over shift sequences; stops once no deeper state can
// beat `upper`. States are packed one token per nibble, so every id in
// `cand` must be < 16 and cand.size() <= kExactShiftSearchLength.
std::size_t exact_ter(const Ids& cand, const Ids& ref, std::size_t upper) {
  using Packed = std::uint64_t;
  const std::size_t n = cand.size();
  const std::size_t bound = multiset_bound(cand, ref);
  std::size_t best = std::min(upper, ids_distance(cand, ref));
  Packed start = 0;
  for (std::size_t i = 0; i < n; ++i) start |= static_cast<Packed>(cand[i]) << (4 * i);
  PackedSet seen;
  seen.insert(start);
  std::vector<Packed> frontier{start}, next;
  int s[kExactShiftSearchLength], moved[kExactShiftSearchLength];
  for (std::size_t depth = 1; depth + bound < best && !frontier.empty(); ++depth) {
    next.clear();
    for (const Packed p : frontier) {
      for (std::size_t i = 0; i < n; ++i) s[i] = static_cast<int>((p >> (4 * i)) & 15);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t len = 1; i + len <= n; ++len) {
          // k: insertion point in the sequence with [i, i+len) removed
          for (std::size_t k = 0; k + len <= n; ++k) {
            if (k == i) continue;
            Packed q = 0;
            for (std::size_t j = 0; j < n; ++j) {
              const std::size_t r = j < k ? j : j < k + len ? i + (j - k) : j - len;
              const int tok = j >= k && j < k + len ? s[r] : s[r < i ? r : r + len];
              moved[j] = tok;
              q |= static_cast<Packed>(tok) << (4 * j);
            }
            if (!seen.insert(q)) continue;
            best = depth + ids_distance(std::span<const int>(moved, n), ref, best - depth);
            next.push_back(q);
          }
        }
      }
    }
    frontier.swap(next);
  }
  return best;
}

}  // namespace

// Greedy shifting can miss optima that need a zero-gain first shift, so
// short candidates also get an exact search bounded by the greedy cost.
std::size_t ter_edits(Tokens candidate, Tokens reference) {
  std::unordered_map<std::string_view, int> ids;
  auto intern = [&](Tokens seq) {
    Ids out;
    out.reserve(seq.size());
    for (const auto& t : seq) out.push_back(ids.emplace(t, static_cast<int>(ids.size())).first->second);
    return out;
  };
  const Ids cand = intern(candidate), ref = intern(reference);
  const std::size_t greedy = greedy_ter(cand, ref);
  if (cand.size() > kExactShiftSearchLength || greedy == multiset_bound(cand, ref)) return greedy;
  return exact_ter(cand, ref, greedy);
}

double ter(Tokens candidate, Tokens reference) {
  if (reference.empty()) throw std::invalid_argument("ter: empty reference");
  return static_cast<double>(ter_edits(candidate, reference)) / static_cast<double>(reference.size());
}

// --- corpus evaluation -----------------------------------------------------

namespace {

struct SampleScores {
  double recall = 0.0, rouge1 = 0.0, rouge2 = 0.0, rougeL = 0.0, ter = 0.0;
  bool vacuous = false;
  BleuStats text, extract;
};

SampleScores score_sample(const EvalItem& item) {
  SampleScores s;
  const auto hyp = tokenize(item.generated);
  const auto ref = tokenize(item.reference);
  s.recall = table_recall(item.extract, item.generated);
  s.vacuous = item.extract.empty();
  s.rouge1 = rouge(hyp, ref, RougeVariant::R1);
  s.rouge2 = rouge(hyp, ref, RougeVariant::R2);
  s.rougeL = rouge(hyp, ref, RougeVariant::RL);
  s.ter = ter(hyp, ref);
  s.text = bleu_stats(hyp, ref);
  s.extract = bleu_extract_stats(item.generated, item.extract);
  return s;
}

MetricReport reduce(std::span<const SampleScores> scores) {
  MetricReport r;
  BleuStats text, extract;
  for (const auto& s : scores) {
    r.table_recall += s.recall;
    r.rouge1 += s.rouge1;
    r.rouge2 += s.rouge2;
    r.rougeL += s.rougeL;
    r.ter += s.ter;
    r.vacuous_recall += s.vacuous ? 1 : 0;
    text += s.text;
    extract += s.extract;
  }
  const double n = static_cast<double>(scores.size());
  r.samples = scores.size();
  r.table_recall /= n;
  r.rouge1 /= n;
  r.rouge2 /= n;
  r.rougeL /= n;
  r.ter /= n;
  r.bleu = bleu_score(text);
  // every reference extract empty: nothing to reproduce
  r.bleu_extract = extract.reference_length == 0 ? 100.0 : bleu_score(extract);
  return r;
}

}  // namespace

MetricReport evaluate_sample(const EvalItem& item) {
  const SampleScores s = score_sample(item);
  return reduce(std::span<const SampleScores>(&s, 1));
}

MetricReport evaluate_corpus(std::span<const EvalItem> items) {
  if (items.empty()) throw std::invalid_argument("evaluate_corpus: no samples");
  std::vector<SampleScores> scores(items.size());
  std::vector<std::string> errors(items.size());
  const auto n = static_cast<std::ptrdiff_t>(items.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      scores[static_cast<std::size_t>(i)] = score_sample(items[static_cast<std::size_t>(i)]);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw std::invalid_argument("sample " + std::to_string(i) + ": " + errors[i]);
  }
  return reduce(scores);
}

MetricReport evaluate_corpus_serial(std::span<const EvalItem> items) {
  if (items.empty()) throw std::invalid_argument("evaluate_corpus: no samples");
  std::vector<SampleScores> scores;
  scores.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    try {
      scores.push_back(score_sample(items[i]));
    } catch (const std::exception& e) {
      throw std::invalid_argument("sample " + std::to_string(i) + ": " + e.what());
    }
  }
  return reduce(scores);
}

std::string metric_report_to_json(const MetricReport& r) {
  nlohmann::ordered_json j = {{"table_recall", r.table_recall}, {"bleu_extract", r.bleu_extract},
                              {"rouge1", r.rouge1},             {"rouge2", r.rouge2},
                              {"rougeL", r.rougeL},             {"bleu", r.bleu},
                              {"ter", r.ter},                   {"samples", r.samples},
                              {"vacuous_recall", r.vacuous_recall}};
  return j.dump();
}

}  // namespace forge
