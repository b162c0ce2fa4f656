#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/autocorrect.hpp"
#include "forge/corpus.hpp"
#include "forge/generate.hpp"
#include "forge/metrics.hpp"

namespace forge {

enum class SelectionStrategy { Random, Uncertainty, Oracle };
std::string_view to_string(SelectionStrategy s);
std::optional<SelectionStrategy> strategy_from_string(std::string_view name);

// Mean per-token binary entropy of the confidences, in nats. Throws on a
// confidence outside (0, 1].
double sample_entropy(const GenerationResult& result);

struct PoolItem {
  std::string sample_id;
  GenerationResult result;
  std::optional<TableExtract> target;  // reference extract, needed by Oracle
};

// llround(fraction * n)
std::size_t select_count(std::size_t n, double fraction);

// Indices into `pool`, in selection order. Random draws uniformly; Uncertainty
// takes the highest entropy, Oracle the lowest table recall; ties by sample id.
std::vector<std::size_t> select_samples(std::span<const PoolItem> pool, SelectionStrategy strategy,
                                        double fraction, std::uint64_t seed);
std::vector<std::size_t> select_top(std::span<const PoolItem> pool, SelectionStrategy strategy,
                                    std::size_t count, std::uint64_t seed);

struct Annotation {
  std::string sample_id;
  std::string corrected_text;
};

struct AnnotationTask {
  std::string sample_id;
  std::string draft;
  std::vector<Table> tables;
};

class Annotator {
 public:
  virtual ~Annotator() = default;
  // Blocks until every task is answered; may throw on timeout.
  virtual std::vector<Annotation> annotate(std::span<const AnnotationTask> tasks) = 0;
};

// Answers each task with the sample's reference report.
class OracleAnnotator final : public Annotator {
 public:
  explicit OracleAnnotator(const Corpus& corpus) : corpus_(corpus) {}
  std::vector<Annotation> annotate(std::span<const AnnotationTask> tasks) override;

 private:
  const Corpus& corpus_;
};

// Drafts for every example of a corpus. The pool is the train split, the
// held-out evaluation set the test split. Immutable after construction.
class HilSession {
 public:
  // Without a generator, drafts come from the corpus' own train templates,
  // never using a sample's own template.
  explicit HilSession(Corpus corpus, std::shared_ptr<const Generator> generator = nullptr,
                      CorrectorConfig corrector = {});

  const Corpus& corpus() const { return corpus_; }
  const std::vector<std::size_t>& pool() const { return pool_; }
  const std::vector<std::size_t>& evaluation() const { return evaluation_; }
  const GenerationResult& draft(std::size_t example) const { return drafts_[example]; }
  const Alignment& alignment(std::size_t example) const { return alignments_[example]; }
  std::optional<std::size_t> pool_index(std::string_view sample_id) const;

  // Pool entries minus `exclude`, drafts passed through the corrector with
  // `memory`, the draft confidences kept.
  std::vector<PoolItem> pool_items(const CorrectionMemory& memory, const std::set<std::string>& exclude = {}) const;

  AnnotationTask task_for(std::size_t example) const;

  // Rules learned from annotations against the raw drafts. Unknown or
  // non-pool sample ids throw NotFoundError.
  std::vector<CorrectionRule> learn(std::span<const Annotation> annotations) const;

  // Corrected test drafts scored against the test reports.
  MetricReport evaluate(const CorrectionMemory& memory) const;

  const CorrectorConfig& corrector() const { return corrector_; }

 private:
  Corpus corpus_;
  CorrectorConfig corrector_;
  std::vector<std::size_t> pool_, evaluation_;
  std::vector<Alignment> alignments_;
  std::vector<GenerationResult> drafts_;
};

GenerationRequest request_for(const PairedExample& example, const Alignment& alignment);

struct StageMetrics {
  double fraction = 0.0;
  MetricReport report;
  std::size_t annotated = 0;  // pool samples annotated so far
  std::size_t rules = 0;      // memory size after the stage
  std::vector<std::string> selected;
};

struct HilRun {
  std::string run_id;
  std::string corpus_ref;
  SelectionStrategy strategy = SelectionStrategy::Random;
  std::uint64_t seed = 0;
  bool cumulative = true;
  std::vector<StageMetrics> stage_metrics;
  CorrectionMemory memory;
  std::set<std::string> annotated;
};

struct StageOutcome {
  std::vector<CorrectionRule> delta;
  MetricReport report;
};

// Learns from the annotations, merges into run.memory and appends the
// stage's test metrics.
StageOutcome run_hil_stage(const HilSession& session, HilRun& run, double fraction,
                           std::span<const Annotation> annotations);

// Pool samples a stage at `fraction` sends out. Cumulative runs grow the
// annotated set to select_count(N, fraction) from not-yet-annotated samples;
// independent runs draw select_count(N, fraction) from the whole pool.
std::vector<std::size_t> stage_selection(const HilSession& session, const HilRun& run, double fraction,
                                         std::size_t stage);

// Fractions must be strictly increasing within [0, 1]. Independent runs
// start every stage from an empty memory.
HilRun sweep_fractions(const HilSession& session, SelectionStrategy strategy, std::span<const double> fractions,
                       std::uint64_t seed, Annotator& annotator, bool cumulative = true);
HilRun sweep_fractions(const Corpus& corpus, SelectionStrategy strategy, std::span<const double> fractions,
                       std::uint64_t seed, Annotator& annotator, bool cumulative = true);

// Area under table recall over fraction, trapezoidal.
double recall_area(const HilRun& run);

}  // namespace forge
