#pragma once

// Data model for event-level news corpora: events as <ARG0, predicate, ARG1>
// triplets, articles with binary ideology labels, stories grouping up to
// three same-story articles. Loading, validation, serialization, splitting.
//
// Stories file: one JSON story per line (see load_corpus). Annotations file:
// one {"event_id": ..., "partisan": ...} record per line.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "plens/common.hpp"

namespace plens {

enum class Ideology { Left, Right };

inline const char* ideology_name(Ideology v) { return v == Ideology::Left ? "left" : "right"; }

struct Event {
  std::string event_id;
  std::vector<std::string> predicate;           // >= 1 token, lowercased
  std::optional<std::vector<std::string>> arg0; // absent or non-empty
  std::optional<std::vector<std::string>> arg1;
  int sent_idx = 0;
  double rel_pos = 0.0;                         // in [0,1], non-decreasing per article
};

struct Article {
  std::string article_id;
  Ideology ideology = Ideology::Left;
  std::vector<Event> events;                    // ordered by (sent_idx, original order)
};

struct Story {
  std::string story_id;
  std::vector<Article> articles;                // 1..3
};

struct Corpus {
  std::vector<Story> stories;
  std::optional<std::map<std::string, bool>> gold_partisan;

  std::size_t article_count() const {
    std::size_t n = 0;
    for (const auto& s : stories) n += s.articles.size();
    return n;
  }
  std::size_t event_count() const {
    std::size_t n = 0;
    for (const auto& s : stories)
      for (const auto& a : s.articles) n += a.events.size();
    return n;
  }
};

namespace detail {

inline void lowercase_tokens(std::vector<std::string>& toks) {
  for (auto& t : toks) t = to_lower(t);
}

}  // namespace detail

/// Checks every structural invariant of a corpus; throws ValidationError on
/// the first violation. `where` prefixes messages (e.g. a file:line tag).
inline void validate_corpus(const Corpus& corpus, const std::string& where = "corpus") {
  std::set<std::string> story_ids;
  for (const auto& story : corpus.stories) {
    if (!story_ids.insert(story.story_id).second)
      throw ValidationError(where + ": duplicate story id \"" + story.story_id + "\"");
    if (story.articles.empty())
      throw ValidationError(where + ": story \"" + story.story_id + "\" has no articles");
    if (story.articles.size() > 3)
      throw ValidationError(where + ": story \"" + story.story_id + "\" exceeds 3 articles");
    std::set<std::string> article_ids;
    for (const auto& article : story.articles) {
      if (!article_ids.insert(article.article_id).second)
        throw ValidationError(where + ": duplicate article id \"" + article.article_id +
                              "\" in story \"" + story.story_id + "\"");
      if (article.events.empty())
        throw ValidationError(where + ": article \"" + article.article_id + "\" has no events");
      std::set<std::string> event_ids;
      int prev_sent = -1;
      double prev_pos = -1.0;
      for (const auto& ev : article.events) {
        if (!event_ids.insert(ev.event_id).second)
          throw ValidationError(where + ": duplicate event id \"" + ev.event_id +
                                "\" in article \"" + article.article_id + "\"");
        if (ev.predicate.empty())
          throw ValidationError(where + ": event \"" + ev.event_id + "\" has empty predicate");
        for (const auto* arg : {&ev.arg0, &ev.arg1})
          if (arg->has_value() && (*arg)->empty())
            throw ValidationError(where + ": event \"" + ev.event_id +
                                  "\" has a present but empty argument");
        if (ev.sent_idx < 0)
          throw ValidationError(where + ": event \"" + ev.event_id + "\" has negative sent_idx");
        if (ev.sent_idx < prev_sent)
          throw ValidationError(where + ": events of article \"" + article.article_id +
                                "\" not sorted by sent_idx near \"" + ev.event_id + "\"");
        if (ev.rel_pos < 0.0 || ev.rel_pos > 1.0)
          throw ValidationError(where + ": event \"" + ev.event_id + "\" rel_pos outside [0,1]");
        if (ev.rel_pos < prev_pos)
          throw ValidationError(where + ": rel_pos decreases within article \"" +
                                article.article_id + "\" near \"" + ev.event_id + "\"");
        prev_sent = ev.sent_idx;
        prev_pos = ev.rel_pos;
      }
    }
  }
  if (corpus.gold_partisan) {
    std::set<std::string> all_ids;
    for (const auto& s : corpus.stories)
      for (const auto& a : s.articles)
        for (const auto& e : a.events) all_ids.insert(e.event_id);
    for (const auto& [id, flag] : *corpus.gold_partisan) {
      (void)flag;
      if (!all_ids.count(id))
        throw ValidationError(where + ": annotation references unknown event id \"" + id + "\"");
    }
  }
}

/// Loads a line-delimited stories file. Center-ideology articles are dropped
/// with a warning (binary task); a story left empty by that is dropped too.
/// Absent rel_pos defaults to event_index/(L-1), 0 when L == 1.
inline Corpus load_corpus(const std::string& path,
                          const std::optional<std::string>& annotations_path = std::nullopt,
                          std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open stories file: " + path);

  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(msg);
  };

  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
    }
    const std::string where = path + ":" + std::to_string(lineno);
    try {
      Story story;
      story.story_id = rec.at("story_id").get<std::string>();
      for (const auto& ja : rec.at("articles")) {
        Article article;
        article.article_id = ja.at("article_id").get<std::string>();
        std::string ideo = to_lower(ja.at("ideology").get<std::string>());
        if (ideo == "center") {
          warn(where + ": discarding center-ideology article \"" + article.article_id + "\"");
          continue;
        }
        if (ideo == "left") article.ideology = Ideology::Left;
        else if (ideo == "right") article.ideology = Ideology::Right;
        else throw ValidationError(where + ": ideology \"" + ideo + "\" not in {left, right}");

        const auto& jevents = ja.at("events");
        const std::size_t n_events = jevents.size();
        std::size_t idx = 0;
        for (const auto& je : jevents) {
          Event ev;
          ev.event_id = je.at("event_id").get<std::string>();
          ev.predicate = je.at("predicate").get<std::vector<std::string>>();
          detail::lowercase_tokens(ev.predicate);
          for (const char* key : {"arg0", "arg1"}) {
            auto& slot = (std::string(key) == "arg0") ? ev.arg0 : ev.arg1;
            if (je.contains(key) && !je.at(key).is_null()) {
              slot = je.at(key).get<std::vector<std::string>>();
              detail::lowercase_tokens(*slot);
            }
          }
          ev.sent_idx = je.at("sent_idx").get<int>();
          if (je.contains("rel_pos") && !je.at("rel_pos").is_null())
            ev.rel_pos = je.at("rel_pos").get<double>();
          else
            ev.rel_pos = n_events <= 1 ? 0.0
                                       : static_cast<double>(idx) / static_cast<double>(n_events - 1);
          article.events.push_back(std::move(ev));
          ++idx;
        }
        story.articles.push_back(std::move(article));
      }
      if (story.articles.empty()) {
        warn(where + ": story \"" + story.story_id + "\" empty after dropping center articles");
        continue;
      }
      corpus.stories.push_back(std::move(story));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + ": malformed record: " + e.what());
    }
  }

  if (annotations_path) {
    std::ifstream ain(*annotations_path);
    if (!ain) throw ValidationError("cannot open annotations file: " + *annotations_path);
    std::map<std::string, bool> gold;
    std::string aline;
    std::size_t alineno = 0;
    while (std::getline(ain, aline)) {
      ++alineno;
      if (trim(aline).empty()) continue;
      try {
        auto rec = nlohmann::json::parse(aline);
        gold[rec.at("event_id").get<std::string>()] = rec.at("partisan").get<bool>();
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(*annotations_path + ":" + std::to_string(alineno) +
                              ": malformed annotation: " + e.what());
      }
    }
    corpus.gold_partisan = std::move(gold);
  }

  validate_corpus(corpus, path);
  return corpus;
}

inline nlohmann::json story_to_json(const Story& story) {
  nlohmann::json js;
  js["story_id"] = story.story_id;
  js["articles"] = nlohmann::json::array();
  for (const auto& a : story.articles) {
    nlohmann::json ja;
    ja["article_id"] = a.article_id;
    ja["ideology"] = ideology_name(a.ideology);
    ja["events"] = nlohmann::json::array();
    for (const auto& e : a.events) {
      nlohmann::json je;
      je["event_id"] = e.event_id;
      je["predicate"] = e.predicate;
      je["arg0"] = e.arg0 ? nlohmann::json(*e.arg0) : nlohmann::json(nullptr);
      je["arg1"] = e.arg1 ? nlohmann::json(*e.arg1) : nlohmann::json(nullptr);
      je["sent_idx"] = e.sent_idx;
      je["rel_pos"] = e.rel_pos;
      ja["events"].push_back(std::move(je));
    }
    js["articles"].push_back(std::move(ja));
  }
  return js;
}

inline std::string serialize_corpus(const Corpus& corpus) {
  std::ostringstream out;
  for (const auto& s : corpus.stories) out << story_to_json(s).dump() << "\n";
  return out.str();
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write stories file: " + path);
  out << serialize_corpus(corpus);
}

inline void save_annotations(const Corpus& corpus, const std::string& path) {
  if (!corpus.gold_partisan) throw ValidationError("corpus carries no gold annotations");
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write annotations file: " + path);
  for (const auto& [id, flag] : *corpus.gold_partisan) {
    nlohmann::json rec;
    rec["event_id"] = id;
    rec["partisan"] = flag;
    out << rec.dump() << "\n";
  }
}

/// Splits by story. Ratios must be positive-or-zero and sum to 1 (1e-9).
/// Counts follow largest remainders over shuffled stories, then each part
/// with a nonzero ratio is topped up from the largest part so none is empty.
inline std::array<Corpus, 3> split_corpus(const Corpus& corpus,
                                          std::array<double, 3> ratios,
                                          std::uint64_t seed) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
  for (double r : ratios)
    if (r < 0.0) throw ValidationError("split ratios must be non-negative");

  const std::size_t n = corpus.stories.size();
  std::size_t nonzero = 0;
  for (double r : ratios)
    if (r > 0.0) ++nonzero;
  if (n < nonzero)
    throw ValidationError("cannot split " + std::to_string(n) + " stories into " +
                          std::to_string(nonzero) + " non-empty parts");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  shuffle_inplace(order, rng);

  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (int p = 0; p < 3; ++p) {
    double exact = ratios[p] * static_cast<double>(n);
    counts[p] = static_cast<std::size_t>(exact);
    remainders[p] = exact - static_cast<double>(counts[p]);
    assigned += counts[p];
  }
  while (assigned < n) {
    int best = 0;
    for (int p = 1; p < 3; ++p)
      if (remainders[p] > remainders[best]) best = p;
    ++counts[best];
    remainders[best] = -1.0;
    ++assigned;
  }
  for (int p = 0; p < 3; ++p) {
    if (ratios[p] > 0.0 && counts[p] == 0) {
      int donor = 0;
      for (int q = 1; q < 3; ++q)
        if (counts[q] > counts[donor]) donor = q;
      --counts[donor];
      ++counts[p];
    }
  }

  std::array<Corpus, 3> parts;
  std::size_t cursor = 0;
  for (int p = 0; p < 3; ++p) {
    for (std::size_t i = 0; i < counts[p]; ++i)
      parts[p].stories.push_back(corpus.stories[order[cursor++]]);
    if (corpus.gold_partisan) {
      std::map<std::string, bool> gold;
      for (const auto& s : parts[p].stories)
        for (const auto& a : s.articles)
          for (const auto& e : a.events) {
            auto it = corpus.gold_partisan->find(e.event_id);
            if (it != corpus.gold_partisan->end()) gold[it->first] = it->second;
          }
      parts[p].gold_partisan = std::move(gold);
    }
  }
  return parts;
}

}  // namespace plens
