// Serial reference vs OpenMP kernels on desk corpora.

#include <benchmark/benchmark.h>

#include <algorithm>
#include <string>
#include <vector>

#include "desk.hpp"
#include "forge/align.hpp"
#include "forge/generate.hpp"
#include "forge/hil.hpp"
#include "forge/metrics.hpp"
#include "forge/synth.hpp"
#include "forge/text.hpp"

using namespace forge;

namespace {

const Corpus& corpus() {
  static const Corpus c = desk::make_corpus({.examples = 400, .seed = 11});
  return c;
}

const std::vector<EvalItem>& eval_items() {
  static const std::vector<EvalItem> items = [] {
    std::vector<EvalItem> out;
    const auto alignments = align_corpus(corpus());
    const TemplateGenerator gen(build_templates(corpus()), true);
    for (std::size_t k = 0; k < corpus().size(); ++k) {
      const auto& ex = corpus().examples[k];
      out.push_back({gen.generate(request_for(ex, alignments[k])).text, ex.report, alignments[k].extract});
    }
    return out;
  }();
  return items;
}

void BM_align_serial(benchmark::State& st) {
  corpus();
  for (auto _ : st) benchmark::DoNotOptimize(align_corpus_serial(corpus()));
}
void BM_align_parallel(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(align_corpus(corpus()));
}

void BM_synth_serial(benchmark::State& st) {
  const SynthConfig cfg{.per_example = static_cast<std::size_t>(st.range(0)), .seed = 3};
  for (auto _ : st) benchmark::DoNotOptimize(generate_synthetic_corpus_serial(corpus(), cfg));
}
void BM_synth_parallel(benchmark::State& st) {
  const SynthConfig cfg{.per_example = static_cast<std::size_t>(st.range(0)), .seed = 3};
  for (auto _ : st) benchmark::DoNotOptimize(generate_synthetic_corpus(corpus(), cfg));
}

void BM_evaluate_serial(benchmark::State& st) {
  const auto& items = eval_items();
  for (auto _ : st) benchmark::DoNotOptimize(evaluate_corpus_serial(items));
}
void BM_evaluate_parallel(benchmark::State& st) {
  const auto& items = eval_items();
  for (auto _ : st) benchmark::DoNotOptimize(evaluate_corpus(items));
}

void BM_ro_titles(benchmark::State& st) {
  const auto& ex = corpus().examples;
  std::size_t k = 0;
  for (auto _ : st) {
    benchmark::DoNotOptimize(ro_similarity(ex[k % ex.size()].tables[0].title, ex[(k + 7) % ex.size()].tables[0].title));
    ++k;
  }
}

// periodic strings maximize longest-substring ties
void BM_ro_periodic(benchmark::State& st) {
  std::string a, b;
  for (std::int64_t k = 0; k < st.range(0); ++k) {
    a += "xxy"[k % 3];
    b += "xyy"[k % 3];
  }
  for (auto _ : st) benchmark::DoNotOptimize(ro_similarity(a, b));
}

void BM_ter(benchmark::State& st) {
  const auto ref = tokenize(corpus().examples[0].report);
  auto cand = ref;
  std::rotate(cand.begin(), cand.begin() + 3, cand.end());
  for (auto _ : st) benchmark::DoNotOptimize(ter_edits(cand, ref));
}

}  // namespace

BENCHMARK(BM_align_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_align_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_synth_serial)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_synth_parallel)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_evaluate_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_evaluate_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ro_titles);
BENCHMARK(BM_ro_periodic)->Arg(16)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ter);

BENCHMARK_MAIN();
