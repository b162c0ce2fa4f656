#pragma once

// Independent reference computations. Deliberately naive: string-keyed
// memos, explicit enumeration, no shared code with the library kernels.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace oracle {

using Seq = std::vector<std::string>;

// Ratcliff-Obershelp matching characters: every longest common substring is
// enumerated explicitly and the best recursive total kept.
std::size_t ro_matches(const std::string& a, const std::string& b);
double ro_ratio(const std::string& a, const std::string& b);

std::size_t levenshtein(const Seq& a, const Seq& b);
std::size_t lcs(const Seq& a, const Seq& b);

// Exact TER edit count: breadth-first search over every sequence reachable
// by block moves, each costing one, plus the edit distance to the reference.
std::size_t ter_exact(const Seq& candidate, const Seq& reference);

// All sequences reachable from `s` by block moves, with their minimal move count.
std::map<Seq, std::size_t> shift_closure(const Seq& s);

// Same over one-character symbols, for exhaustive sweeps.
std::vector<std::pair<std::string, std::size_t>> shift_closure_chars(const std::string& s);
std::size_t levenshtein_chars(const std::string& a, const std::string& b);

struct Clipped {
  std::size_t matches = 0;
  std::size_t total = 0;
};
Clipped clipped_ngrams(const Seq& candidate, const Seq& reference, std::size_t n);

// Corpus BLEU from pooled clipped counts, add-one for zero precisions at n >= 2.
double bleu(const std::vector<Seq>& candidates, const std::vector<Seq>& references);

double rouge_n(const Seq& candidate, const Seq& reference, std::size_t n);
double rouge_l(const Seq& candidate, const Seq& reference);

Seq chars(const std::string& s);  // one token per character

}  // namespace oracle
