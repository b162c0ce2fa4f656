#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

struct Token {
  std::string text;
  std::size_t begin = 0;  // byte offsets into the tokenized string
  std::size_t end = 0;
};

// Fill value for template slots whose table position does not exist.
inline constexpr std::string_view kMissingToken = "[N/A]";

// Whitespace split, then punctuation detached one character at a time.
// Numerals survive intact ("0.65", "-2"), runs of '*' stay together and
// the missing-value marker is atomic. join_tokens() output re-tokenizes
// to the same sequence.
std::vector<Token> tokenize_spans(std::string_view text);
std::vector<std::string> tokenize(std::string_view text);
std::string join_tokens(std::span<const std::string> tokens);

struct Splice {
  std::size_t begin;
  std::size_t end;
  std::string replacement;
};

// Applies non-overlapping byte-range replacements. If the spliced string no
// longer tokenizes to `expected_tokens`, the space-joined tokens are returned.
std::string splice_text(std::string_view text, std::vector<Splice> splices,
                        std::span<const std::string> expected_tokens);

// Integer ("-12") or decimal ("0.65") surfaces only; no exponents, no separators.
std::optional<double> parse_number(std::string_view surface);
int decimal_places(std::string_view surface);
std::string format_fixed(double value, int decimals);

std::string to_lower_ascii(std::string_view s);
bool is_ascii_digit(char c);
bool is_ascii_alpha(char c);

}  // namespace forge
