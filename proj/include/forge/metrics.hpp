#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/align.hpp"

namespace forge {

using Tokens = std::span<const std::string>;

// Unique extract surfaces found as contiguous token runs of `text`, over the
// number of unique surfaces. An empty extract scores 1 (vacuous).
double table_recall(const TableExtract& extract, std::string_view text, bool case_sensitive = true);

// Reference values as they occur in `text`, in text order, repetitions kept.
// Multi-token surfaces are matched longest first.
TableExtract restore_extract(std::string_view text, const TableExtract& reference);

struct BleuStats {
  std::array<std::size_t, 4> matches{};  // clipped n-gram matches, n = 1..4
  std::array<std::size_t, 4> totals{};   // candidate n-grams
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;

  BleuStats& operator+=(const BleuStats& other);
  bool operator==(const BleuStats&) const = default;
};

BleuStats bleu_stats(Tokens candidate, Tokens reference);

// 100 * BP * geometric mean of p_1..p_4. For n >= 2 a zero precision is
// replaced by 1 / (totals + 1); a zero unigram precision gives 0.
double bleu_score(const BleuStats& stats);
double bleu(Tokens candidate, Tokens reference);

// Value surfaces as single units, for BLEU over extracts.
std::vector<std::string> extract_units(const TableExtract& extract);
BleuStats bleu_extract_stats(std::string_view generated, const TableExtract& reference);
double bleu_extract(std::string_view generated, const TableExtract& reference);

enum class RougeVariant { R1, R2, RL };

std::size_t lcs_length(Tokens a, Tokens b);
// F1. Two sequences without n-grams score 1 when equal, else 0.
double rouge(Tokens candidate, Tokens reference, RougeVariant variant);

std::size_t edit_distance(Tokens a, Tokens b);

// Greedy block shifts (each must strictly lower the total cost, at most
// 50) followed by word edit distance.
std::size_t ter_edits(Tokens candidate, Tokens reference);
double ter(Tokens candidate, Tokens reference);  // throws on an empty reference

struct MetricReport {
  double table_recall = 0.0;
  double bleu_extract = 0.0;
  double bleu = 0.0;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double ter = 0.0;
  std::size_t samples = 0;
  std::size_t vacuous_recall = 0;  // samples with an empty extract
};

struct EvalItem {
  std::string generated;
  std::string reference;
  TableExtract extract;
};

MetricReport evaluate_sample(const EvalItem& item);

// Macro averages, except BLEU and BLEU Extract which pool n-gram counts.
MetricReport evaluate_corpus(std::span<const EvalItem> items);
MetricReport evaluate_corpus_serial(std::span<const EvalItem> items);

std::string metric_report_to_json(const MetricReport& report);

}  // namespace forge
