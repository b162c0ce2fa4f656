// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "desk.hpp"
#include "forge/align.hpp"
#include "forge/autocorrect.hpp"
#include "forge/generate.hpp"
#include "forge/hil.hpp"
#include "forge/metrics.hpp"
#include "forge/preprocess.hpp"
#include "forge/service.hpp"
#include "forge/synth.hpp"
#include "forge/text.hpp"
#include "metric_cases.hpp"
#include "oracles.hpp"

using namespace forge;
using Clk = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "first failure: " << what << "; ";
    pass = pass && ok;
  }
};

double seconds_since(Clk::time_point t0) { return std::chrono::duration<double>(Clk::now() - t0).count(); }

// --- 1 ---------------------------------------------------------------------

std::vector<std::string> all_words(std::size_t max_len, const std::string& alphabet) {
  std::vector<std::string> out{""};
  for (std::size_t begin = 0; begin < out.size(); ++begin) {
    if (out[begin].size() == max_len) continue;
    for (char c : alphabet) out.push_back(out[begin] + c);
  }
  return out;
}

void metric_suite(Verdict& v) {
  const auto t0 = Clk::now();
  const auto cases = desk::hand_metric_cases();
  std::size_t hand_ok = 0;
  for (const auto& c : cases) {
    const double got = c.compute();
    const bool ok = std::abs(got - c.expected) <= 1e-6;
    hand_ok += ok;
    v.require(ok, c.name + " = " + std::to_string(got));
  }
  v.require(cases.size() >= 20, "fewer than 20 hand cases");

  // every pair up to length 6 over three symbols
  const auto words = all_words(6, "abc");
  std::size_t pairs = 0, agree = 0;
  for (const auto& c : words) {
    const auto closure = oracle::shift_closure_chars(c);
    const auto cand = oracle::chars(c);
    for (const auto& r : words) {
      if (r.empty()) continue;
      std::size_t best = SIZE_MAX;
      for (const auto& [s, moves] : closure) best = std::min(best, moves + oracle::levenshtein_chars(s, r));
      ++pairs;
      const bool ok = ter_edits(cand, oracle::chars(r)) == best;
      agree += ok;
      if (!ok) v.require(false, "ter " + c + " vs " + r);
    }
  }
  const double secs = seconds_since(t0);
  v.require(secs < 60.0, "runtime over one minute");
  v.detail << hand_ok << "/" << cases.size() << " hand cases, ter " << agree << "/" << pairs << " exhaustive pairs, "
           << secs << " s";
}

// --- 2 ---------------------------------------------------------------------

void ro_suite(Verdict& v) {
  Rng rng(derive_seed({2, 0x70}));
  const std::string alphabets[] = {"ab", "abc", "abcd", "abcdefgh"};
  std::size_t exact = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto& alpha = alphabets[k % 4];
    std::string a, b;
    for (std::size_t n = rng.below(13); n > 0; --n) a += alpha[rng.below(alpha.size())];
    for (std::size_t n = rng.below(13); n > 0; --n) b += alpha[rng.below(alpha.size())];
    const bool match = ro_matching_characters(a, b) == oracle::ro_matches(a, b) &&
                       ro_similarity(a, b) == oracle::ro_ratio(a, b);
    exact += match;
    v.require(match, "oracle mismatch on '" + a + "' / '" + b + "'");
    v.require(ro_similarity(a, b) == ro_similarity(b, a), "asymmetric on '" + a + "' / '" + b + "'");
    v.require(ro_similarity(a, a) == 1.0 && ro_similarity(b, b) == 1.0, "d(s,s) != 1 for '" + a + "'");
  }
  v.detail << exact << "/1000 exact";
}

// --- 3 ---------------------------------------------------------------------

void template_suite(Verdict& v) {
  const auto corpus = desk::make_corpus({.examples = 120, .seed = 3});
  std::size_t ok = 0;
  for (const auto& ex : corpus.examples) {
    const auto out = fill_template(build_template(ex, match_values(ex)), ex.tables);
    const bool same = tokenize(out.text) == tokenize(ex.report);
    ok += same;
    v.require(same, "round trip differs for " + ex.id);
  }
  v.detail << ok << "/" << corpus.size() << " reports reproduced";
}

// --- 4 ---------------------------------------------------------------------

std::vector<ValueKind> kinds(const Alignment& a) {
  std::vector<ValueKind> out;
  for (const auto& x : a.extract.values) out.push_back(x.kind);
  return out;
}

void synth_suite(Verdict& v) {
  const auto t0 = Clk::now();
  const auto corpus = desk::make_corpus({.examples = 43, .seed = 4});
  const SynthConfig cfg{.per_example = 1000, .seed = 2024};
  const auto syn = generate_synthetic_corpus(corpus, cfg);
  v.require(syn.size() == 43000, "pair count " + std::to_string(syn.size()));

  std::map<std::string, const PairedExample*> source;
  for (const auto& ex : corpus.examples) source[ex.id] = &ex;
  Rng rng(derive_seed({4, 500}));
  std::size_t preserved = 0;
  for (int k = 0; k < 500; ++k) {
    const auto& s = syn.examples[rng.below(syn.size())];
    const auto& orig = *source.at(s.meta.at("synthetic_source"));
    const auto a = match_values(orig), b = match_values(s);
    bool ok = kinds(a) == kinds(b);
    std::map<std::string, std::string> fwd, bwd;
    for (std::size_t i = 0; ok && i < a.extract.values.size(); ++i) {
      const auto& from = a.extract.values[i].surface;
      const auto& to = b.extract.values[i].surface;
      ok = fwd.emplace(from, to).first->second == to && bwd.emplace(to, from).first->second == from;
    }
    preserved += ok;
    v.require(ok, "alignment or replacement broken in " + s.id);
  }
  const auto again = generate_synthetic_corpus(corpus, cfg);
  v.require(corpus_to_text(again) == corpus_to_text(syn), "same seed, different bytes");
  const double secs = seconds_since(t0);
  v.require(secs < 300.0, "runtime over five minutes");
  v.detail << syn.size() << " pairs, " << preserved << "/500 sampled pairs preserved, deterministic, " << secs << " s";
}

// --- 5 ---------------------------------------------------------------------

void limit_suite(Verdict& v) {
  const auto corpus = desk::make_limit_corpus(5);
  const FlattenLimits known{desk::kLimitRows, desk::kLimitTokens};
  const double at_known = limit_coverage(corpus, known);
  v.require(std::abs(at_known - 0.85) < 1e-12, "construction is not exactly 85%");
  const auto limits = calibrate_limits(corpus, 0.85);
  v.require(limits.max_rows == known.max_rows && limits.max_tokens_per_row == known.max_tokens_per_row,
            "calibrated (" + std::to_string(limits.max_rows) + ", " + std::to_string(limits.max_tokens_per_row) + ")");
  const double cov = limit_coverage(corpus, limits);
  v.require(cov >= 0.85, "coverage " + std::to_string(cov));
  v.detail << "limits (" << limits.max_rows << ", " << limits.max_tokens_per_row << "), coverage " << cov;
}

// --- 6 ---------------------------------------------------------------------

// Table values of the same kind as `surface`, as numbers (numeric kinds only).
bool unique_nearest_numeric(const std::string& original, const std::string& planted, const TableIndex& index) {
  const auto kind = classify_value(original);
  const double x = *parse_number(planted);
  const double d0 = std::abs(x - *parse_number(original));
  for (const auto& occ : index.tokens()) {
    const auto& t = occ.tokens.front();
    if (t == original || classify_value(t) != kind) continue;
    if (std::abs(x - *parse_number(t)) <= d0) return false;
  }
  return d0 / std::max(std::abs(x), std::abs(*parse_number(original))) <= 0.25;
}

bool unique_nearest_string(const std::string& original, const std::string& planted, const TableIndex& index) {
  const double s0 = oracle::ro_ratio(planted, original);
  for (const auto& occ : index.tokens()) {
    const auto& t = occ.tokens.front();
    if (t == original || classify_value(t) != ValueKind::StringValue) continue;
    if (oracle::ro_ratio(planted, t) >= s0) return false;
  }
  return s0 >= 0.6;
}

std::string plant_numeric(const std::string& s) {
  // bump the last digit: 300 -> 301, 0.65 -> 0.66, 9.9 -> 9.8
  std::string out = s;
  char& d = out.back();
  d = d == '9' ? '8' : static_cast<char>(d + 1);
  return out;
}

void autocorrect_suite(Verdict& v) {
  const auto corpus = desk::make_corpus({.examples = 100, .seed = 6});
  // near misses, one planted per draft
  std::size_t planted = 0, fixed = 0, skipped = 0;
  for (const auto& ex : corpus.examples) {
    const TableIndex index(ex.tables);
    const auto a = match_values(ex);
    const auto spans = tokenize_spans(ex.report);
    for (std::size_t k = 0; k < a.extract.values.size(); ++k) {
      const auto& val = a.extract.values[k];
      if (val.tokens().size() != 1) continue;
      std::string bad;
      if (val.kind == ValueKind::Integer || val.kind == ValueKind::Float) {
        bad = plant_numeric(val.surface);
        if (index.contains(bad) || !unique_nearest_numeric(val.surface, bad, index)) {
          ++skipped;
          continue;
        }
      } else if (val.kind == ValueKind::StringValue && val.surface.size() >= 5) {
        bad = val.surface;
        bad[bad.size() / 2] = bad[bad.size() / 2] == 'q' ? 'x' : 'q';
        if (index.contains(bad) || !unique_nearest_string(val.surface, bad, index)) {
          ++skipped;
          continue;
        }
      } else {
        continue;
      }
      auto toks = tokenize(ex.report);
      const std::size_t pos = a.report_positions[k];
      toks[pos] = bad;
      std::string draft = ex.report;
      draft.replace(spans[pos].begin, spans[pos].end - spans[pos].begin, bad);
      const auto out = correct_values(draft, ex.tables, {});
      ++planted;
      const bool ok = tokenize(out.text).at(pos) == val.surface;
      fixed += ok;
      v.require(ok, "near miss '" + bad + "' for '" + val.surface + "' in " + ex.id + " left as '" +
                        tokenize(out.text).at(pos) + "'");
    }
  }

  // randomized drafts: idempotence and recall
  Rng rng(derive_seed({6, 1000}));
  CorrectionMemory memory = apply_memory(
      {}, std::vector<CorrectionRule>{{"Plasmo", "Plasma", std::nullopt, std::nullopt, 1},
                                      {"Serum", "Urine", std::string("the"), std::nullopt, 2},
                                      {"QC1", "QC2", std::nullopt, std::nullopt, 1},
                                      {"QC2", "QC3", std::nullopt, std::nullopt, 1}});
  std::size_t idempotent = 0, recall_ok = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto& ex = corpus.examples[rng.below(corpus.size())];
    auto toks = tokenize(ex.report);
    for (auto& tok : toks) {
      switch (rng.below(8)) {
        case 0:
          if (auto kind = classify_value(tok); kind == ValueKind::Integer || kind == ValueKind::Float) {
            tok = jitter_numeric(tok, rng, 0.4);
          }
          break;
        case 1:
          if (classify_value(tok) == ValueKind::StringValue && tok.size() > 2) tok[rng.below(tok.size())] = 'z';
          break;
        case 2:
          if (tok == "Plasma") tok = "Plasmo";
          break;
        default:
          break;
      }
    }
    if (rng.below(4) == 0 && toks.size() > 2) toks.erase(toks.begin() + static_cast<std::ptrdiff_t>(rng.below(toks.size())));
    const auto draft = join_tokens(toks);
    const auto extract = match_values(ex).extract;
    const auto once = correct_values(draft, ex.tables, memory);
    const auto twice = correct_values(once.text, ex.tables, memory);
    const bool same = twice.text == once.text && twice.edits.empty();
    idempotent += same;
    v.require(same, "not idempotent on draft " + std::to_string(k));
    const bool up = table_recall(extract, once.text) >= table_recall(extract, draft);
    recall_ok += up;
    v.require(up, "recall dropped on draft " + std::to_string(k));
  }
  v.require(planted > 100, "too few near misses planted");
  v.detail << fixed << "/" << planted << " near misses fixed (" << skipped << " ambiguous plants skipped), "
           << idempotent << "/1000 idempotent, " << recall_ok << "/1000 recall kept";
}

// --- 7 ---------------------------------------------------------------------

void hil_suite(Verdict& v) {
  const auto t0 = Clk::now();
  const auto hc = desk::make_hil_corpus(7);
  const HilSession session(hc.corpus, std::make_shared<TemplateGenerator>(build_templates(hc.templates)));
  OracleAnnotator annotator(hc.corpus);
  const std::vector<double> fractions{0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0};
  std::map<SelectionStrategy, HilRun> runs;
  for (auto s : {SelectionStrategy::Random, SelectionStrategy::Uncertainty, SelectionStrategy::Oracle}) {
    runs[s] = sweep_fractions(session, s, fractions, 7, annotator);
    const auto& st = runs[s].stage_metrics;
    v.detail << to_string(s) << " [";
    for (std::size_t k = 0; k < st.size(); ++k) {
      v.detail << (k ? " " : "") << std::round(st[k].report.table_recall * 1e4) / 1e4;
      if (k) v.require(st[k].report.table_recall >= st[k - 1].report.table_recall, std::string(to_string(s)) + " recall decreased");
    }
    v.detail << "] auc " << recall_area(runs[s]) << "; ";
  }
  const auto& oracle = runs[SelectionStrategy::Oracle].stage_metrics;
  const double final_recall = oracle.back().report.table_recall;
  v.require(oracle[2].report.table_recall >= 0.95 * final_recall, "oracle below 95% of its final recall at 40%");
  const double a_o = recall_area(runs[SelectionStrategy::Oracle]);
  const double a_u = recall_area(runs[SelectionStrategy::Uncertainty]);
  const double a_r = recall_area(runs[SelectionStrategy::Random]);
  v.require(a_o >= a_u, "auc oracle < uncertainty");
  v.require(a_u >= a_r, "auc uncertainty < random");
  const double secs = seconds_since(t0);
  v.require(secs < 600.0, "runtime over ten minutes");
  v.detail << secs << " s";
}

// --- 8 ---------------------------------------------------------------------

void service_suite(Verdict& v) {
  const auto dir = std::filesystem::temp_directory_path() / ("forge-acceptance-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  const auto corpus = desk::make_corpus({.examples = 30, .seed = 8, .test_fraction = 0.2});
  std::string state;
  std::vector<std::string> events;
  std::size_t double_assigned = 0, lost = 0, claims = 0;
  {
    ReviewStore store(dir);
    ReviewServer server(store);
    const int port = server.start_background();
    const auto corpus_id = store.add_corpus(corpus);
    const HilSession session(corpus);
    std::vector<AnnotationTask> tasks;
    for (std::size_t k = 0; k < 4; ++k) tasks.push_back(session.task_for(session.pool()[k]));

    httplib::Client a("127.0.0.1", port), b("127.0.0.1", port);
    for (int it = 0; it < 1000; ++it) {
      const auto run_id = store.create_run_with_tasks(corpus_id, tasks);
      std::vector<std::string> got_a, got_b;
      auto client = [&run_id](httplib::Client& c, std::vector<std::string>& got) {
        for (;;) {
          auto res = c.Get("/api/runs/" + run_id + "/tasks/next");
          if (!res || res->status != 200) break;
          got.push_back(nlohmann::json::parse(res->body).at("task_id").get<std::string>());
        }
      };
      std::thread ta(client, std::ref(a), std::ref(got_a));
      std::thread tb(client, std::ref(b), std::ref(got_b));
      ta.join();
      tb.join();
      std::multiset<std::string> all(got_a.begin(), got_a.end());
      all.insert(got_b.begin(), got_b.end());
      claims += all.size();
      std::set<std::string> distinct(all.begin(), all.end());
      double_assigned += all.size() - distinct.size();
      lost += tasks.size() - distinct.size();
      // half the runs are completed through the API
      if (it % 2 == 0) {
        for (const auto& tid : distinct) {
          const auto t = store.task(tid);
          const auto body = nlohmann::json{{"corrected_text", corpus.find(t.sample_id)->report}}.dump();
          auto res = a.Post("/api/tasks/" + tid + "/annotation", body, "application/json");
          v.require(res && res->status == 200, "submission failed for " + tid);
        }
      }
    }
    v.require(double_assigned == 0, std::to_string(double_assigned) + " double assignments");
    v.require(lost == 0, std::to_string(lost) + " tasks never handed out");

    // idempotent submission
    const auto t = store.task("run-1-t1");
    const auto text = *t.annotation;
    const auto before_events = store.events().size();
    const auto before_state = store.snapshot();
    const auto body = nlohmann::json{{"corrected_text", text}}.dump();
    auto res = a.Post("/api/tasks/run-1-t1/annotation", body, "application/json");
    v.require(res && res->status == 200 && nlohmann::json::parse(res->body).at("repeated") == true,
              "resubmission not reported as repeated");
    v.require(store.events().size() == before_events && store.snapshot() == before_state, "resubmission changed state");
    res = a.Post("/api/tasks/run-1-t1/annotation", nlohmann::json{{"corrected_text", text + " x"}}.dump(), "application/json");
    v.require(res && res->status == 409, "conflicting resubmission accepted");

    server.stop();
    state = store.snapshot();
    events = store.events();
  }
  v.require(ReviewStore::replay(events)->snapshot() == state, "replay differs");
  {
    ReviewStore reloaded(dir);
    v.require(reloaded.snapshot() == state, "reload from the event log differs");
  }
  std::filesystem::remove_all(dir);
  v.detail << claims << " claims over 1000 two-client rounds, " << double_assigned << " double assignments, "
           << events.size() << " events replayed";
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<void(Verdict&)>> criteria[] = {
      {"1 metric oracle suite", metric_suite}, {"2 ro similarity oracle", ro_suite},
      {"3 template round trip", template_suite}, {"4 synthesis", synth_suite},
      {"5 limit calibration", limit_suite},     {"6 autocorrector", autocorrect_suite},
      {"7 hil sweep", hil_suite},               {"8 review service", service_suite},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Verdict v;
    try {
      run(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.str().c_str());
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed ? 1 : 0;
}
