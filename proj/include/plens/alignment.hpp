#pragma once

// Lexical event alignment. Two events from different articles are "the same"
// when their predicate key sets intersect and both argument slots clear an
// overlap-coefficient threshold after stopword removal. Per story this yields
// a frequency category per event and the set of events common across
// opposite-ideology articles.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "plens/common.hpp"
#include "plens/corpus.hpp"
#include "plens/lexicon.hpp"

namespace plens {

enum class FrequencyCategory { Unique, Shared, Universal };

inline const char* frequency_name(FrequencyCategory c) {
  switch (c) {
    case FrequencyCategory::Unique: return "unique";
    case FrequencyCategory::Shared: return "shared";
    default: return "universal";
  }
}

struct AlignmentResult {
  std::map<std::string, FrequencyCategory> category;
  std::set<std::string> cross_side_common;
};

inline constexpr double kMatchThreshold = 0.4;

/// Predicate tokens plus their base forms plus synonyms of both.
inline std::set<std::string> predicate_key_set(const Event& ev, const Lexicon& lex) {
  std::set<std::string> keys;
  for (const auto& raw : ev.predicate) {
    const std::string tok = to_lower(raw);
    const std::string base = lex.base_of(tok);
    keys.insert(tok);
    keys.insert(base);
    for (const std::string* src : {&tok, &base})
      if (const auto* syns = lex.synonyms_of(*src)) keys.insert(syns->begin(), syns->end());
  }
  return keys;
}

/// |a∩b| / min(|a|,|b|). Both empty: 1. Exactly one empty: 0.
inline double overlap_coefficient(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  const auto& small = a.size() <= b.size() ? a : b;
  const auto& large = a.size() <= b.size() ? b : a;
  std::size_t inter = 0;
  for (const auto& t : small) inter += large.count(t);
  return static_cast<double>(inter) / static_cast<double>(small.size());
}

namespace detail {

inline bool sets_intersect(const std::set<std::string>& a, const std::set<std::string>& b) {
  const auto& small = a.size() <= b.size() ? a : b;
  const auto& large = a.size() <= b.size() ? b : a;
  for (const auto& t : small)
    if (large.count(t)) return true;
  return false;
}

inline std::optional<std::set<std::string>> filtered_arg(
    const std::optional<std::vector<std::string>>& arg, const Lexicon& lex) {
  if (!arg) return std::nullopt;
  std::set<std::string> out;
  for (const auto& raw : *arg) {
    std::string tok = to_lower(raw);
    if (!lex.is_stopword(tok)) out.insert(std::move(tok));
  }
  return out;
}

/// Absent/absent pairs count as 1, absent/present as 0; a present argument
/// reduced to nothing by stopword removal still counts as present (two such
/// empty sets score 1 by the coefficient's both-empty rule).
inline double arg_overlap(const std::optional<std::set<std::string>>& a,
                          const std::optional<std::set<std::string>>& b) {
  if (!a && !b) return 1.0;
  if (!a || !b) return 0.0;
  return overlap_coefficient(*a, *b);
}

struct PreparedEvent {
  const Event* ev = nullptr;
  std::set<std::string> keys;
  std::optional<std::set<std::string>> arg0;
  std::optional<std::set<std::string>> arg1;
};

inline PreparedEvent prepare_event(const Event& ev, const Lexicon& lex) {
  return {&ev, predicate_key_set(ev, lex), filtered_arg(ev.arg0, lex), filtered_arg(ev.arg1, lex)};
}

inline bool prepared_match(const PreparedEvent& x, const PreparedEvent& z, double threshold) {
  // Predicate gate: one shared key suffices (a coefficient gate is the
  // alternative reading of "sets overlap"; intersection is used throughout).
  if (!sets_intersect(x.keys, z.keys)) return false;
  return arg_overlap(x.arg0, z.arg0) >= threshold && arg_overlap(x.arg1, z.arg1) >= threshold;
}

}  // namespace detail

inline bool events_match(const Event& x, const Event& z, const Lexicon& lex,
                         double threshold = kMatchThreshold) {
  if (threshold <= 0.0 || threshold > 1.0)
    throw ValidationError("match threshold must lie in (0,1]");
  return detail::prepared_match(detail::prepare_event(x, lex), detail::prepare_event(z, lex),
                                threshold);
}

/// Categorizes each event by how many distinct articles of the story contain
/// a matching event (its own article always counts): exactly one article is
/// Unique, all articles Universal, anything between Shared. No transitive
/// closure: matches are evaluated pairwise. Single-article stories are all
/// Unique.
inline AlignmentResult align_story(const Story& story, const Lexicon& lex,
                                   double threshold = kMatchThreshold) {
  if (threshold <= 0.0 || threshold > 1.0)
    throw ValidationError("match threshold must lie in (0,1]");
  const std::size_t n_articles = story.articles.size();

  std::vector<std::vector<detail::PreparedEvent>> prep(n_articles);
  for (std::size_t i = 0; i < n_articles; ++i) {
    prep[i].reserve(story.articles[i].events.size());
    for (const auto& ev : story.articles[i].events)
      prep[i].push_back(detail::prepare_event(ev, lex));
  }

  // matched_in[i][k]: articles holding a match for event k of article i.
  std::vector<std::vector<std::set<std::size_t>>> matched_in(n_articles);
  std::vector<std::vector<bool>> cross_side(n_articles);
  for (std::size_t i = 0; i < n_articles; ++i) {
    matched_in[i].resize(prep[i].size());
    cross_side[i].assign(prep[i].size(), false);
  }
  for (std::size_t i = 0; i < n_articles; ++i) {
    for (std::size_t j = i + 1; j < n_articles; ++j) {
      const bool opposite = story.articles[i].ideology != story.articles[j].ideology;
      for (std::size_t a = 0; a < prep[i].size(); ++a) {
        for (std::size_t b = 0; b < prep[j].size(); ++b) {
          if (!detail::prepared_match(prep[i][a], prep[j][b], threshold)) continue;
          matched_in[i][a].insert(j);
          matched_in[j][b].insert(i);
          if (opposite) {
            cross_side[i][a] = true;
            cross_side[j][b] = true;
          }
        }
      }
    }
  }

  AlignmentResult result;
  for (std::size_t i = 0; i < n_articles; ++i) {
    for (std::size_t k = 0; k < prep[i].size(); ++k) {
      const std::size_t article_count = 1 + matched_in[i][k].size();
      FrequencyCategory cat = FrequencyCategory::Unique;
      if (article_count > 1)
        cat = article_count == n_articles ? FrequencyCategory::Universal
                                          : FrequencyCategory::Shared;
      result.category[prep[i][k].ev->event_id] = cat;
      if (cross_side[i][k]) result.cross_side_common.insert(prep[i][k].ev->event_id);
    }
  }
  return result;
}

/// story_id → alignment, for a whole corpus.
inline std::map<std::string, AlignmentResult> align_corpus(const Corpus& corpus,
                                                           const Lexicon& lex,
                                                           double threshold = kMatchThreshold) {
  std::map<std::string, AlignmentResult> out;
  for (const auto& story : corpus.stories) out[story.story_id] = align_story(story, lex, threshold);
  return out;
}

}  // namespace plens
