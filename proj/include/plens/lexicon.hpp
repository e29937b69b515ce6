#pragma once

// Lexical resources for event matching: derivational base forms, synonym
// sets, stopwords. All lookups are total with identity fallback, so an empty
// lexicon degrades to exact-token matching.
//
// File formats (UTF-8, lowercased on load):
//   base forms  token<TAB>base_form
//   synonyms    token<TAB>syn1,syn2,...
//   stopwords   one token per line
// Lines starting with '#' and blank lines are skipped.

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "plens/common.hpp"

namespace plens {

struct Lexicon {
  std::map<std::string, std::string> base_form;
  std::map<std::string, std::set<std::string>> synonyms;
  std::set<std::string> stopwords;

  const std::string& base_of(const std::string& token) const {
    auto it = base_form.find(token);
    return it == base_form.end() ? token : it->second;
  }

  const std::set<std::string>* synonyms_of(const std::string& token) const {
    auto it = synonyms.find(token);
    return it == synonyms.end() ? nullptr : &it->second;
  }

  bool is_stopword(const std::string& token) const { return stopwords.count(token) != 0; }
};

/// Fixed English stopword list bundled with the library; a stopwords file
/// replaces it wholesale.
inline const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = {
      "a",      "an",     "the",    "of",     "in",     "on",      "at",    "to",
      "for",    "with",   "by",     "from",   "as",     "is",      "are",   "was",
      "were",   "be",     "been",   "being",  "am",     "and",     "or",    "but",
      "not",    "no",     "nor",    "this",   "that",   "these",   "those", "it",
      "its",    "he",     "she",    "they",   "them",   "his",     "her",   "hers",
      "their",  "theirs", "we",     "us",     "our",    "ours",    "you",   "your",
      "yours",  "i",      "me",     "my",     "mine",   "him",     "who",   "whom",
      "which",  "what",   "whose",  "will",   "would",  "can",     "could", "shall",
      "should", "may",    "might",  "must",   "do",     "does",    "did",   "have",
      "has",    "had",    "having", "about",  "into",   "over",    "under", "after",
      "before", "between", "during", "through", "up",    "down",   "out",   "off",
      "above",  "below",  "again",  "further", "then",  "once",    "here",  "there",
      "when",   "where",  "why",    "how",    "all",    "any",     "both",  "each",
      "few",    "more",   "most",   "other",  "some",   "such",    "only",  "own",
      "same",   "so",     "than",   "too",    "very",   "s",       "t",     "just",
      "don",    "now",    "if",     "because", "while", "until",
  };
  return words;
}

namespace detail {

template <class F>
void for_each_data_line(const std::string& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open lexicon file: " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    f(t, lineno);
  }
}

}  // namespace detail

/// Any path may be empty; base forms and synonyms then stay empty and
/// stopwords fall back to the bundled list.
inline Lexicon load_lexicon(const std::string& base_form_path = "",
                            const std::string& synonyms_path = "",
                            const std::string& stopwords_path = "") {
  Lexicon lex;
  if (!base_form_path.empty()) {
    detail::for_each_data_line(base_form_path, [&](const std::string& line, std::size_t lineno) {
      auto tab = line.find('\t');
      if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
        throw ValidationError(base_form_path + ":" + std::to_string(lineno) +
                              ": expected token<TAB>base_form");
      lex.base_form[to_lower(trim(line.substr(0, tab)))] = to_lower(trim(line.substr(tab + 1)));
    });
  }
  if (!synonyms_path.empty()) {
    detail::for_each_data_line(synonyms_path, [&](const std::string& line, std::size_t lineno) {
      auto tab = line.find('\t');
      if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
        throw ValidationError(synonyms_path + ":" + std::to_string(lineno) +
                              ": expected token<TAB>syn1,syn2,...");
      std::string token = to_lower(trim(line.substr(0, tab)));
      auto& set = lex.synonyms[token];
      for (const auto& raw : split(line.substr(tab + 1), ',')) {
        std::string syn = to_lower(trim(raw));
        if (!syn.empty()) set.insert(syn);
      }
      if (set.empty())
        throw ValidationError(synonyms_path + ":" + std::to_string(lineno) +
                              ": empty synonym list for \"" + token + "\"");
    });
  }
  if (!stopwords_path.empty()) {
    detail::for_each_data_line(stopwords_path, [&](const std::string& line, std::size_t) {
      lex.stopwords.insert(to_lower(line));
    });
  } else {
    lex.stopwords = default_stopwords();
  }
  return lex;
}

}  // namespace plens
