#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include "forge/align.hpp"
#include "forge/corpus.hpp"
#include "forge/rng.hpp"

namespace forge {

struct SlotDictionary {
  std::map<ValueKind, std::set<std::string>> entries;

  const std::set<std::string>& of(ValueKind kind) const;
  bool operator==(const SlotDictionary&) const = default;
};

struct SynthConfig {
  std::size_t per_example = 1000;
  std::uint64_t seed = 0;
  double jitter_relative_bound = 0.1;

  void validate() const;
};

// StringValue, RunId and TableId surfaces matched in train reports, by kind.
SlotDictionary build_slot_dictionary(const Corpus& corpus);

// A nearby numeral of the same kind. The new value lies within
// bound * max(|v|, 1) of the original, or one unit in the last place when the
// bound is narrower than that; it keeps the original's sign and uses the
// original precision or one digit finer (floats only). Never returns the input.
std::string jitter_numeric(std::string_view surface, Rng& rng, double bound = 0.1);

// Same as jitter_numeric with the output precision fixed.
std::string jitter_numeric_at(std::string_view surface, Rng& rng, double bound, int precision);

// A different permutation of the characters that still classifies as a run id.
std::string scramble_alnum(std::string_view surface, Rng& rng);

// Replaces every distinct matched value consistently across tables and report.
// Per-replacement randomness derives from (stream, value index). Meta keys:
// "synthetic_source", plus "synthetic_kept" listing values left unchanged and
// "synthetic_unchanged" when nothing was matched.
PairedExample synthesize_pair(const PairedExample& example, const Alignment& alignment,
                              const SlotDictionary& dict, const SynthConfig& config,
                              std::uint64_t stream);
PairedExample synthesize_pair(const PairedExample& example, const SlotDictionary& dict,
                              const SynthConfig& config, std::uint64_t stream);

// per_example synthetic pairs for every train example, example-major, ids
// suffixed "-syn<k>". Streams derive from (seed, example index, k), so the
// output does not depend on thread scheduling.
Corpus generate_synthetic_corpus(const Corpus& corpus, const SynthConfig& config);
Corpus generate_synthetic_corpus_serial(const Corpus& corpus, const SynthConfig& config);

}  // namespace forge
