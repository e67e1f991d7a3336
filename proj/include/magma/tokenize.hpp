#pragma once

// Index-side tokenizer: lower-case, split on non-alphanumerics, drop a fixed
// 50-word stopword list. The evaluation metrics deliberately use a different
// (whitespace-only) tokenizer; see eval.hpp.

#include <array>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace magma {

inline const std::array<std::string_view, 50>& stopword_list() {
  static const std::array<std::string_view, 50> words = {
      "a",    "an",   "the",  "and",  "or",     "but",  "if",     "when", "what", "who",
      "how",  "why",  "at",   "by",   "for",    "with", "about",  "into", "through",
      "during", "before", "after", "to", "from", "in",  "on",     "of",   "over", "under",
      "is",   "are",  "was",  "were", "be",     "been", "am",     "do",   "does", "did",
      "have", "has",  "had",  "i",    "you",    "he",   "she",    "it",   "we",   "they",
      "this"};
  return words;
}

inline bool is_stopword(std::string_view w) {
  static const std::unordered_set<std::string_view> set(stopword_list().begin(),
                                                        stopword_list().end());
  return set.count(w) > 0;
}

// Word characters: ASCII alphanumerics plus any non-ASCII byte, so UTF-8
// sequences survive as opaque word material.
inline bool word_char(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

// Tokenize without stopword removal.
inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (word_char(c)) {
      cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a')
                                         : static_cast<char>(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// The indexing pipeline: split_words minus stopwords.
inline std::vector<std::string> index_tokenize(std::string_view text) {
  std::vector<std::string> out;
  for (auto& w : split_words(text))
    if (!is_stopword(w)) out.push_back(std::move(w));
  return out;
}

}  // namespace magma
