#include "forge/hil.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "forge/rng.hpp"
#include "forge/text.hpp"

namespace forge {

std::string_view to_string(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::Random: return "random";
    case SelectionStrategy::Uncertainty: return "uncertainty";
    case SelectionStrategy::Oracle: return "oracle";
  }
  return "random";
}

std::optional<SelectionStrategy> strategy_from_string(std::string_view name) {
  const auto lower = to_lower_ascii(name);
  if (lower == "random") return SelectionStrategy::Random;
  if (lower == "uncertainty") return SelectionStrategy::Uncertainty;
  if (lower == "oracle") return SelectionStrategy::Oracle;
  return std::nullopt;
}

double sample_entropy(const GenerationResult& result) {
  if (result.token_confidences.empty()) return 0.0;
  double sum = 0.0;
  for (double p : result.token_confidences) {
    if (!(p > 0.0 && p <= 1.0)) throw Error("token confidence " + std::to_string(p) + " outside (0, 1]");
    if (p < 1.0) sum -= p * std::log(p) + (1.0 - p) * std::log(1.0 - p);
  }
  return sum / static_cast<double>(result.token_confidences.size());
}

std::size_t select_count(std::size_t n, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("fraction must lie in [0, 1]");
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

std::vector<std::size_t> select_top(std::span<const PoolItem> pool, SelectionStrategy strategy, std::size_t count,
                                    std::uint64_t seed) {
  if (count > pool.size()) throw std::invalid_argument("selection larger than the pool");
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto by_id = [&](std::size_t a, std::size_t b) { return pool[a].sample_id < pool[b].sample_id; };
  std::sort(order.begin(), order.end(), by_id);

  switch (strategy) {
    case SelectionStrategy::Random: {
      Rng rng(derive_seed({seed, 0x7a3}));
      rng.shuffle(order.begin(), order.end());
      break;
    }
    case SelectionStrategy::Uncertainty: {
      std::vector<double> h(pool.size());
      for (std::size_t i = 0; i < pool.size(); ++i) h[i] = sample_entropy(pool[i].result);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return h[a] > h[b]; });
      break;
    }
    case SelectionStrategy::Oracle: {
      std::vector<double> recall(pool.size());
      for (std::size_t i = 0; i < pool.size(); ++i) {
        if (!pool[i].target) throw std::invalid_argument("oracle selection needs a target for '" + pool[i].sample_id + "'");
        recall[i] = table_recall(*pool[i].target, pool[i].result.text);
      }
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return recall[a] < recall[b]; });
      break;
    }
  }
  order.resize(count);
  return order;
}

std::vector<std::size_t> select_samples(std::span<const PoolItem> pool, SelectionStrategy strategy,
                                        double fraction, std::uint64_t seed) {
  return select_top(pool, strategy, select_count(pool.size(), fraction), seed);
}

std::vector<Annotation> OracleAnnotator::annotate(std::span<const AnnotationTask> tasks) {
  std::vector<Annotation> out;
  out.reserve(tasks.size());
  for (const auto& t : tasks) {
    const auto* ex = corpus_.find(t.sample_id);
    if (!ex) throw NotFoundError("oracle annotator has no sample '" + t.sample_id + "'");
    out.push_back({t.sample_id, ex->report});
  }
  return out;
}

GenerationRequest request_for(const PairedExample& example, const Alignment& alignment) {
  std::vector<TableExtract> per_table(example.tables.size());
  for (const auto& v : alignment.extract.values) {
    if (v.source && v.source->table < per_table.size()) per_table[v.source->table].values.push_back(v);
  }
  return {example.id, assemble_generator_input(per_table, example.tables), example.tables};
}

HilSession::HilSession(Corpus corpus, std::shared_ptr<const Generator> generator, CorrectorConfig corrector)
    : corpus_(std::move(corpus)), corrector_(corrector) {
  for (std::size_t i = 0; i < corpus_.examples.size(); ++i) {
    (corpus_.examples[i].split == Split::Train ? pool_ : evaluation_).push_back(i);
  }
  alignments_ = align_corpus(corpus_);
  if (!generator) {
    std::vector<Template> templates;
    for (std::size_t i : pool_) templates.push_back(build_template(corpus_.examples[i], alignments_[i]));
    if (templates.empty()) throw Error("HIL session needs train examples to draft from");
    generator = std::make_shared<TemplateGenerator>(std::move(templates), true);
  }
  drafts_.resize(corpus_.examples.size());
  std::vector<std::string> errors(drafts_.size());
  const auto n = static_cast<std::ptrdiff_t>(drafts_.size());
#pragma omp parallel for schedule(dynamic) if (generator->concurrent())
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      drafts_[k] = generate(request_for(corpus_.examples[k], alignments_[k]), *generator);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(e);
  }
}

std::optional<std::size_t> HilSession::pool_index(std::string_view sample_id) const {
  for (std::size_t i : pool_) {
    if (corpus_.examples[i].id == sample_id) return i;
  }
  return std::nullopt;
}

std::vector<PoolItem> HilSession::pool_items(const CorrectionMemory& memory, const std::set<std::string>& exclude) const {
  std::vector<PoolItem> out;
  for (std::size_t i : pool_) {
    const auto& ex = corpus_.examples[i];
    if (exclude.count(ex.id)) continue;
    auto corrected = correct_values(drafts_[i], ex.tables, memory, corrector_);
    out.push_back({ex.id, {std::move(corrected.text), drafts_[i].token_confidences}, alignments_[i].extract});
  }
  return out;
}

AnnotationTask HilSession::task_for(std::size_t example) const {
  return {corpus_.examples[example].id, drafts_[example].text, corpus_.examples[example].tables};
}

std::vector<CorrectionRule> HilSession::learn(std::span<const Annotation> annotations) const {
  std::vector<CorrectionRule> all;
  for (const auto& a : annotations) {
    const auto idx = pool_index(a.sample_id);
    if (!idx) throw NotFoundError("annotation for unknown pool sample '" + a.sample_id + "'");
    auto rules = learn_corrections(drafts_[*idx].text, a.corrected_text);
    all.insert(all.end(), rules.begin(), rules.end());
  }
  return apply_memory({}, all).rules;
}

MetricReport HilSession::evaluate(const CorrectionMemory& memory) const {
  if (evaluation_.empty()) throw Error("HIL session has no test examples to evaluate");
  std::vector<EvalItem> items(evaluation_.size());
  const auto n = static_cast<std::ptrdiff_t>(items.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::size_t k = evaluation_[static_cast<std::size_t>(i)];
    const auto& ex = corpus_.examples[k];
    items[static_cast<std::size_t>(i)] = {correct_values(drafts_[k], ex.tables, memory, corrector_).text, ex.report,
                                          alignments_[k].extract};
  }
  return evaluate_corpus(items);
}

StageOutcome run_hil_stage(const HilSession& session, HilRun& run, double fraction,
                           std::span<const Annotation> annotations) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("fraction must lie in [0, 1]");
  if (!run.stage_metrics.empty() && fraction <= run.stage_metrics.back().fraction) {
    throw std::invalid_argument("stage fractions must be strictly increasing");
  }
  StageOutcome out;
  out.delta = session.learn(annotations);
  run.memory = apply_memory(std::move(run.memory), out.delta);
  StageMetrics stage;
  stage.fraction = fraction;
  for (const auto& a : annotations) {
    run.annotated.insert(a.sample_id);
    stage.selected.push_back(a.sample_id);
  }
  out.report = session.evaluate(run.memory);
  stage.report = out.report;
  stage.annotated = run.annotated.size();
  stage.rules = run.memory.rules.size();
  run.stage_metrics.push_back(std::move(stage));
  return out;
}

std::vector<std::size_t> stage_selection(const HilSession& session, const HilRun& run, double fraction,
                                         std::size_t stage) {
  const std::size_t target = select_count(session.pool().size(), fraction);
  const std::set<std::string> none;
  const auto& exclude = run.cumulative ? run.annotated : none;
  const CorrectionMemory empty;
  const auto& memory = run.cumulative ? run.memory : empty;
  const std::size_t already = run.cumulative ? run.annotated.size() : 0;
  const std::size_t need = target > already ? target - already : 0;

  std::vector<std::size_t> examples;
  for (std::size_t i : session.pool()) {
    if (!exclude.count(session.corpus().examples[i].id)) examples.push_back(i);
  }
  const auto items = session.pool_items(memory, exclude);
  std::vector<std::size_t> out;
  for (std::size_t k : select_top(items, run.strategy, need, derive_seed({run.seed, stage}))) {
    out.push_back(examples[k]);
  }
  return out;
}

HilRun sweep_fractions(const HilSession& session, SelectionStrategy strategy, std::span<const double> fractions,
                       std::uint64_t seed, Annotator& annotator, bool cumulative) {
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] >= 0.0 && fractions[i] <= 1.0)) throw std::invalid_argument("fractions must lie in [0, 1]");
    if (i && fractions[i] <= fractions[i - 1]) throw std::invalid_argument("fractions must be strictly increasing");
  }
  HilRun run;
  run.corpus_ref = session.corpus().provenance.count("source") ? session.corpus().provenance.at("source") : "";
  run.strategy = strategy;
  run.seed = seed;
  run.cumulative = cumulative;
  run.run_id = std::string(to_string(strategy)) + "-" + std::to_string(seed);
  for (std::size_t s = 0; s < fractions.size(); ++s) {
    if (!cumulative) {
      run.memory = {};
      run.annotated.clear();
    }
    const auto picked = stage_selection(session, run, fractions[s], s);
    std::vector<AnnotationTask> tasks;
    for (std::size_t i : picked) tasks.push_back(session.task_for(i));
    std::vector<Annotation> annotations;
    if (!tasks.empty()) annotations = annotator.annotate(tasks);
    run_hil_stage(session, run, fractions[s], annotations);
  }
  return run;
}

HilRun sweep_fractions(const Corpus& corpus, SelectionStrategy strategy, std::span<const double> fractions,
                       std::uint64_t seed, Annotator& annotator, bool cumulative) {
  const HilSession session(corpus);
  return sweep_fractions(session, strategy, fractions, seed, annotator, cumulative);
}

double recall_area(const HilRun& run) {
  double area = 0.0;
  const auto& st = run.stage_metrics;
  for (std::size_t i = 1; i < st.size(); ++i) {
    area += (st[i].fraction - st[i - 1].fraction) * (st[i].report.table_recall + st[i - 1].report.table_recall) / 2.0;
  }
  return area;
}

}  // namespace forge
