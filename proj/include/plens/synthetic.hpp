#pragma once

// Synthetic corpus generator. Every story holds exactly two articles, one
// Left and one Right in random order. Both articles share a block of common
// events (identical triplets, never gold-partisan); each article adds its own
// unique neutral and unique partisan events, and gold_partisan covers every
// event id.
//
// Marker models:
//   Lexical      partisan events carry an unambiguous own-side marker token
//                (lmark*/rmark*) with probability marker_strength.
//   Comparative  partisan events carry a token from an ordered intensity
//                scale (lvl*). Each story draws a random base level; the
//                Right article sits `gap` steps above the Left one, with gap
//                proportional to 0.3 * marker_strength. A single article
//                cannot calibrate the story's base level, so side is near
//                chance from one article alone; comparing the two articles
//                cancels the base and reveals the side.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "plens/common.hpp"
#include "plens/corpus.hpp"

namespace plens {

enum class SyntheticMode { Lexical, Comparative };

inline const char* synthetic_mode_name(SyntheticMode m) {
  return m == SyntheticMode::Lexical ? "lexical" : "comparative";
}

inline SyntheticMode parse_synthetic_mode(const std::string& s) {
  if (s == "lexical") return SyntheticMode::Lexical;
  if (s == "comparative") return SyntheticMode::Comparative;
  throw ValidationError("unknown synthetic mode: " + s + " (expected lexical or comparative)");
}

struct SyntheticConfig {
  int n_stories = 100;
  int events_per_article = 60;    // mean; per-story counts jitter about +-20%
  double partisan_fraction = 0.27;
  double common_fraction = 0.25;  // share of each article planted in both sides
  double marker_strength = 1.0;   // probability a partisan event carries its marker
  double common_paraphrase = 0.0; // chance a right-side copy of a common event
                                  // redraws each argument token; 0 keeps the
                                  // two sides' common bodies verbatim
  double common_marker = 0.0;     // chance each side's copy of a common event
                                  // carries that side's marker: shared events
                                  // with side-specific spin, gold stays false
  SyntheticMode mode = SyntheticMode::Lexical;
  int content_vocab = 2000;       // neutral token pool; keep large, small pools
                                  // let unique events collide across sides
  int marker_vocab = 40;          // marker pool per side (Lexical) or scale length (Comparative)
  std::uint64_t seed = 0;
};

inline void validate_synthetic_config(const SyntheticConfig& cfg) {
  if (cfg.n_stories < 1) throw ValidationError("n_stories must be >= 1");
  if (cfg.events_per_article < 4) throw ValidationError("events_per_article must be >= 4");
  if (cfg.partisan_fraction <= 0.0 || cfg.partisan_fraction >= 1.0)
    throw ValidationError("partisan_fraction must lie in (0,1)");
  if (cfg.common_fraction <= 0.0 || cfg.common_fraction >= 1.0)
    throw ValidationError("common_fraction must lie in (0,1)");
  if (cfg.partisan_fraction + cfg.common_fraction > 0.9)
    throw ValidationError("partisan_fraction + common_fraction leave no room for neutral events");
  if (cfg.marker_strength < 0.0 || cfg.marker_strength > 1.0)
    throw ValidationError("marker_strength must lie in [0,1]");
  if (cfg.common_paraphrase < 0.0 || cfg.common_paraphrase >= 1.0)
    throw ValidationError("common_paraphrase must lie in [0,1)");
  if (cfg.common_marker < 0.0 || cfg.common_marker > 1.0)
    throw ValidationError("common_marker must lie in [0,1]");
  if (cfg.content_vocab < 50) throw ValidationError("content_vocab must be >= 50");
  if (cfg.marker_vocab < 8) throw ValidationError("marker_vocab must be >= 8");
}

namespace detail {

struct TripletBody {
  std::vector<std::string> predicate;
  std::optional<std::vector<std::string>> arg0;
  std::optional<std::vector<std::string>> arg1;
  bool partisan = false;
};

inline std::string content_token(Rng& rng, int vocab) {
  return "tok" + std::to_string(uniform_below(rng, static_cast<std::uint64_t>(vocab)));
}

inline std::vector<std::string> token_run(Rng& rng, int vocab, int lo, int hi) {
  auto n = uniform_int(rng, lo, hi);
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out.push_back(content_token(rng, vocab));
  return out;
}

// arg1 absent ~10% of the time so the optional-argument path stays exercised.
inline TripletBody neutral_body(Rng& rng, int vocab) {
  TripletBody b;
  b.predicate = token_run(rng, vocab, 1, 2);
  b.arg0 = token_run(rng, vocab, 1, 3);
  if (!bernoulli(rng, 0.1)) b.arg1 = token_run(rng, vocab, 1, 3);
  return b;
}

// One marker token for `side`: a side-specific lexical cue, or the side's
// intensity level on the story's comparative scale.
inline std::string side_marker(SyntheticMode mode, Ideology side, int marker_vocab,
                               int base_level, int gap, Rng& rng) {
  if (mode == SyntheticMode::Lexical) {
    auto u = uniform_below(rng, static_cast<std::uint64_t>(marker_vocab));
    return (side == Ideology::Left ? "lmark" : "rmark") + std::to_string(u);
  }
  return "lvl" + std::to_string(base_level + (side == Ideology::Right ? gap : 0));
}

// Redraws argument tokens in place; the predicate stays verbatim so the pair
// still clears the match gate as long as enough argument overlap survives.
inline void paraphrase_args(TripletBody& b, double p, int vocab, Rng& rng) {
  auto jitter = [&](std::optional<std::vector<std::string>>& arg) {
    if (!arg) return;
    for (auto& tok : *arg)
      if (bernoulli(rng, p)) tok = content_token(rng, vocab);
  };
  jitter(b.arg0);
  jitter(b.arg1);
}

}  // namespace detail

/// Gap between the two sides' intensity levels in Comparative mode.
inline int comparative_gap(double marker_strength) {
  return std::max(1, static_cast<int>(std::lround(0.3 * marker_strength * 10.0)));
}

inline Corpus generate_synthetic(const SyntheticConfig& cfg) {
  validate_synthetic_config(cfg);
  Rng rng(cfg.seed);
  Corpus corpus;
  std::map<std::string, bool> gold;

  const int gap = comparative_gap(cfg.marker_strength);

  for (int si = 0; si < cfg.n_stories; ++si) {
    const std::string story_id = "s" + std::to_string(si);
    const int jitter = std::max(1, cfg.events_per_article / 5);
    const int L = static_cast<int>(uniform_int(rng, std::max(4, cfg.events_per_article - jitter),
                                               cfg.events_per_article + jitter));
    const int n_partisan = std::max(
        1, static_cast<int>(std::lround(cfg.partisan_fraction * static_cast<double>(L))));
    const int n_common = std::min(
        L - n_partisan,
        std::max(1, static_cast<int>(std::lround(cfg.common_fraction * static_cast<double>(L)))));
    const int n_neutral = L - n_partisan - n_common;

    std::vector<detail::TripletBody> common;
    for (int j = 0; j < n_common; ++j) common.push_back(detail::neutral_body(rng, cfg.content_vocab));

    // Comparative: one base level per story; Left sits at base, Right at base+gap.
    const int base_level =
        static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(cfg.marker_vocab - gap)));

    Story story;
    story.story_id = story_id;
    const bool left_first = bernoulli(rng, 0.5);
    for (int ai = 0; ai < 2; ++ai) {
      const Ideology side = ((ai == 0) == left_first) ? Ideology::Left : Ideology::Right;
      Article article;
      article.article_id = story_id + (side == Ideology::Left ? "_l" : "_r");
      article.ideology = side;

      std::vector<detail::TripletBody> bodies = common;
      for (auto& b : bodies) {
        if (cfg.common_paraphrase > 0.0 && side == Ideology::Right)
          detail::paraphrase_args(b, cfg.common_paraphrase, cfg.content_vocab, rng);
        if (cfg.common_marker > 0.0 && bernoulli(rng, cfg.common_marker))
          b.predicate.push_back(detail::side_marker(cfg.mode, side, cfg.marker_vocab,
                                                    base_level, gap, rng));
      }
      for (int j = 0; j < n_neutral; ++j)
        bodies.push_back(detail::neutral_body(rng, cfg.content_vocab));
      for (int j = 0; j < n_partisan; ++j) {
        detail::TripletBody b = detail::neutral_body(rng, cfg.content_vocab);
        b.partisan = true;
        if (bernoulli(rng, cfg.marker_strength))
          b.predicate.push_back(detail::side_marker(cfg.mode, side, cfg.marker_vocab,
                                                    base_level, gap, rng));
        bodies.push_back(std::move(b));
      }
      shuffle_inplace(bodies, rng);

      const std::size_t n_events = bodies.size();
      for (std::size_t k = 0; k < n_events; ++k) {
        Event ev;
        ev.event_id = article.article_id + "_e" + std::to_string(k);
        ev.predicate = std::move(bodies[k].predicate);
        ev.arg0 = std::move(bodies[k].arg0);
        ev.arg1 = std::move(bodies[k].arg1);
        ev.sent_idx = static_cast<int>(k);
        ev.rel_pos = n_events <= 1 ? 0.0
                                   : static_cast<double>(k) / static_cast<double>(n_events - 1);
        gold[ev.event_id] = bodies[k].partisan;
        article.events.push_back(std::move(ev));
      }
      story.articles.push_back(std::move(article));
    }
    corpus.stories.push_back(std::move(story));
  }

  corpus.gold_partisan = std::move(gold);
  validate_corpus(corpus, "synthetic");
  return corpus;
}

}  // namespace plens
