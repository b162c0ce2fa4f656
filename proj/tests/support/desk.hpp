#pragma once

// Synthetic desk-scale corpora for tests, the acceptance gate and benchmarks.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/generate.hpp"

namespace desk {

struct Options {
  std::size_t examples = 100;
  std::uint64_t seed = 1;
  std::size_t min_rows = 3;
  std::size_t max_rows = 8;
  double test_fraction = 0.0;
};

// Assay tables (Sample, Concentration, Response, Accuracy, Batch) with a
// report citing values from a few rows, the table id and the run id.
forge::Corpus make_corpus(const Options& options);

// Limit-calibration corpus: 8-column single-token tables of 10 rows.
// 85 matched values lie in rows [0, 4) at row offsets [0, 6), with at least
// one in row 3 and one at offset 5; the other 15 lie in rows [6, 10).
forge::Corpus make_limit_corpus(std::uint64_t seed);
inline constexpr std::size_t kLimitRows = 4;
inline constexpr std::size_t kLimitTokens = 6;

// Planted-error HIL corpus. Every example belongs to a family sharing one
// report skeleton. Error families' template reports carry a wrong string value
// where the family's tables hold another, dissimilar one; their sample titles
// also drift further from the template title.
struct HilCorpus {
  forge::Corpus corpus;     // train pool + test split
  forge::Corpus templates;  // one template example per family, all train
  std::vector<std::string> wrong;    // per family, empty for error-free ones
  std::vector<std::string> correct;  // per family
};
HilCorpus make_hil_corpus(std::uint64_t seed, std::size_t families = 10, std::size_t error_families = 6,
                          std::size_t train_per_family = 6, std::size_t test_per_family = 4);

}  // namespace desk
