#include "forge/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace forge {

bool is_ascii_digit(char c) { return c >= '0' && c <= '9'; }
bool is_ascii_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_punct(char c) {
  auto u = static_cast<unsigned char>(c);
  return u < 0x80 && u > 0x20 && u != 0x7f && !is_ascii_alpha(c) && !is_ascii_digit(c);
}

bool is_alnum(char c) { return is_ascii_alpha(c) || is_ascii_digit(c); }

}  // namespace

std::vector<Token> tokenize_spans(std::string_view text) {
  std::vector<Token> out;
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    while (i < n && is_space(text[i])) ++i;
    if (i >= n) break;
    std::size_t chunk_end = i;
    while (chunk_end < n && !is_space(text[chunk_end])) ++chunk_end;
    const std::size_t chunk_begin = i;

    if (text.substr(chunk_begin, chunk_end - chunk_begin) == kMissingToken) {
      out.push_back({std::string(kMissingToken), chunk_begin, chunk_end});
      i = chunk_end;
      continue;
    }

    while (i < chunk_end) {
      const char c = text[i];
      if (c == '*') {
        std::size_t j = i;
        while (j < chunk_end && text[j] == '*') ++j;
        out.push_back({std::string(text.substr(i, j - i)), i, j});
        i = j;
        continue;
      }
      const bool signed_number = c == '-' && i + 1 < chunk_end && is_ascii_digit(text[i + 1]) &&
                                 (i == chunk_begin || !is_alnum(text[i - 1]));
      if (is_punct(c) && !signed_number) {
        out.push_back({std::string(1, c), i, i + 1});
        ++i;
        continue;
      }
      std::size_t j = signed_number ? i + 1 : i;
      while (j < chunk_end) {
        const char d = text[j];
        if (!is_punct(d)) {
          ++j;
          continue;
        }
        // decimal point inside a numeral
        if (d == '.' && j > i && is_ascii_digit(text[j - 1]) && j + 1 < chunk_end &&
            is_ascii_digit(text[j + 1])) {
          ++j;
          continue;
        }
        break;
      }
      out.push_back({std::string(text.substr(i, j - i)), i, j});
      i = j;
    }
    i = chunk_end;
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : tokenize_spans(text)) out.push_back(std::move(t.text));
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string splice_text(std::string_view text, std::vector<Splice> splices,
                        std::span<const std::string> expected_tokens) {
  std::sort(splices.begin(), splices.end(),
            [](const Splice& a, const Splice& b) { return a.begin < b.begin; });
  std::string out;
  std::size_t cursor = 0;
  for (const auto& s : splices) {
    out.append(text.substr(cursor, s.begin - cursor));
    out += s.replacement;
    cursor = s.end;
  }
  out.append(text.substr(cursor));
  auto check = tokenize(out);
  if (std::equal(check.begin(), check.end(), expected_tokens.begin(), expected_tokens.end())) {
    return out;
  }
  return join_tokens(expected_tokens);
}

std::optional<double> parse_number(std::string_view s) {
  std::size_t i = 0;
  if (i < s.size() && s[i] == '-') ++i;
  std::size_t int_digits = 0;
  while (i < s.size() && is_ascii_digit(s[i])) ++i, ++int_digits;
  if (int_digits == 0) return std::nullopt;
  if (i < s.size()) {
    if (s[i] != '.') return std::nullopt;
    ++i;
    std::size_t frac = 0;
    while (i < s.size() && is_ascii_digit(s[i])) ++i, ++frac;
    if (frac == 0 || i != s.size()) return std::nullopt;
  }
  return std::stod(std::string(s));
}

int decimal_places(std::string_view s) {
  auto dot = s.find('.');
  return dot == std::string_view::npos ? 0 : static_cast<int>(s.size() - dot - 1);
}

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", std::max(decimals, 0), value);
  std::string out(buf);
  // "-0", "-0.00" -> unsigned zero
  if (out.front() == '-' &&
      std::all_of(out.begin() + 1, out.end(), [](char c) { return c == '0' || c == '.'; })) {
    out.erase(out.begin());
  }
  return out;
}

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

}  // namespace forge
