#pragma once

// Comparison systems for event-level partisanship, all emitting the same
// prediction records as model inference:
//
//   random        Bernoulli flags, coin-flip ideology
//   event_prior   per-article top fraction by |P(left)-P(right)| skew
//   attention     top fraction by received attention in a trained predictor
//   perturbation  top fraction by prediction change when an event is zeroed

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "plens/model.hpp"
#include "plens/train.hpp"

namespace plens {

struct BaselineConfig {
  double partisan_probability = 0.3;  // random baseline flag rate
  double selection_fraction = 0.30;   // flagged share for the ranking baselines
  bool attention_all_layers = false;  // sum received attention over every block
  std::uint64_t seed = 0;
};

inline void validate_baseline_config(const BaselineConfig& cfg) {
  if (!(cfg.partisan_probability > 0.0 && cfg.partisan_probability < 1.0))
    throw ValidationError("partisan_probability must lie in (0,1)");
  if (!(cfg.selection_fraction > 0.0 && cfg.selection_fraction < 1.0))
    throw ValidationError("selection_fraction must lie in (0,1)");
}

/// Independent Bernoulli(p) flags (score = the uniform draw, so flagged
/// events are exactly the top-score tail) and a fair-coin ideology.
inline std::vector<ArticlePrediction> baseline_random(const Story& story,
                                                      const BaselineConfig& cfg, Rng& rng) {
  std::vector<ArticlePrediction> preds;
  for (const auto& a : story.articles) {
    ArticlePrediction p;
    p.article_id = a.article_id;
    p.ideology_pred = bernoulli(rng, 0.5) ? Ideology::Right : Ideology::Left;
    p.ideology_prob = 0.5;
    for (const auto& ev : a.events) {
      EventPrediction e;
      e.event_id = ev.event_id;
      e.score = uniform01(rng);
      e.partisan = e.score > 1.0 - cfg.partisan_probability;
      p.events.push_back(std::move(e));
    }
    preds.push_back(std::move(p));
  }
  return preds;
}

/// Flags the top selection_fraction of events per article by prior skew
/// |P(left) - P(right)|; the article side is the majority of the flagged
/// events' argmax sides, ties toward Left, probability = vote share.
template <class S>
std::vector<ArticlePrediction> baseline_event_prior(const Story& story,
                                                    const EventPriorModel<S>& prior,
                                                    const BaselineConfig& cfg) {
  std::vector<ArticlePrediction> preds;
  for (const auto& a : story.articles) {
    std::vector<const Event*> events;
    events.reserve(a.events.size());
    for (const auto& ev : a.events) events.push_back(&ev);
    const auto probs = prior_probabilities(prior, events);
    std::vector<double> skew(events.size());
    for (std::size_t i = 0; i < events.size(); ++i) skew[i] = std::fabs(probs[i][0] - probs[i][1]);
    const auto flags = hard_topk(skew, resolve_fraction(events.size(), cfg.selection_fraction));

    std::size_t votes_left = 0, votes_right = 0;
    ArticlePrediction p;
    p.article_id = a.article_id;
    for (std::size_t i = 0; i < events.size(); ++i) {
      EventPrediction e;
      e.event_id = events[i]->event_id;
      e.score = skew[i];
      e.partisan = flags[i] > 0.5;
      if (e.partisan) ++(probs[i][1] > probs[i][0] ? votes_right : votes_left);
      p.events.push_back(std::move(e));
    }
    p.ideology_pred = votes_right > votes_left ? Ideology::Right : Ideology::Left;
    const std::size_t total = votes_left + votes_right;
    p.ideology_prob =
        total == 0 ? 0.5
                   : static_cast<double>(std::max(votes_left, votes_right)) /
                         static_cast<double>(total);
    preds.push_back(std::move(p));
  }
  return preds;
}

namespace detail {

template <class S>
std::vector<ArticlePrediction> ideology_only_predictions(Model<S>& m, const Story& story,
                                                         const AlignmentResult* alignment) {
  auto lps = story_class_logprobs(m, story, alignment);
  std::vector<ArticlePrediction> preds(story.articles.size());
  for (std::size_t a = 0; a < story.articles.size(); ++a) {
    preds[a].article_id = story.articles[a].article_id;
    preds[a].ideology_pred = argmax_label(lps[a]);
    preds[a].ideology_prob = std::exp(lps[a][label_index(preds[a].ideology_pred)]);
    for (const auto& ev : story.articles[a].events) {
      EventPrediction e;
      e.event_id = ev.event_id;
      preds[a].events.push_back(std::move(e));
    }
  }
  return preds;
}

template <class S>
void flag_top_fraction(std::vector<ArticlePrediction>& preds, const Story& story,
                       const std::vector<double>& scores, double fraction) {
  std::size_t flat = 0;
  for (std::size_t a = 0; a < story.articles.size(); ++a) {
    const std::size_t L = story.articles[a].events.size();
    std::vector<double> part(scores.begin() + static_cast<std::ptrdiff_t>(flat),
                             scores.begin() + static_cast<std::ptrdiff_t>(flat + L));
    const auto sel = hard_topk(part, resolve_fraction(L, fraction));
    for (std::size_t i = 0; i < L; ++i) {
      preds[a].events[i].score = part[i];
      preds[a].events[i].partisan = sel[i] > 0.5;
    }
    flat += L;
  }
}

}  // namespace detail

/// Flags the events receiving the most attention (summed over heads and query
/// positions, last block unless attention_all_layers); ideology comes from
/// the predictor itself. Expects a NonLatent model, whose predictor reads the
/// full story.
template <class S>
std::vector<ArticlePrediction> baseline_attention(Model<S>& m, const Story& story,
                                                  const AlignmentResult* alignment,
                                                  const BaselineConfig& cfg) {
  if (m.cfg.family != ModelFamily::NonLatent)
    throw ValidationError("baseline_attention needs a nonlatent model");
  Rng rng(0);
  StoryEncoding<S> se;
  Tensor<S> lp = predictor_logprobs(*m.predictor, story, alignment,
                                    static_cast<const Tensor<S>*>(nullptr), m.cfg.scope, rng,
                                    /*training=*/false, &se, /*record_attention=*/true,
                                    cfg.attention_all_layers);
  std::vector<ArticlePrediction> preds(story.articles.size());
  for (std::size_t a = 0; a < story.articles.size(); ++a) {
    preds[a].article_id = story.articles[a].article_id;
    std::array<double, 2> row = {static_cast<double>(lp.at(a, 0)),
                                 static_cast<double>(lp.at(a, 1))};
    preds[a].ideology_pred = argmax_label(row);
    preds[a].ideology_prob = std::exp(row[label_index(preds[a].ideology_pred)]);
    for (const auto& ev : story.articles[a].events) {
      EventPrediction e;
      e.event_id = ev.event_id;
      preds[a].events.push_back(std::move(e));
    }
  }
  detail::flag_top_fraction<S>(preds, story, se.received_attention, cfg.selection_fraction);
  return preds;
}

/// Zeroes one event embedding at a time and scores it by the change in its
/// article's predicted-class probability; flags the top fraction per article.
/// Ideology comes from the unperturbed predictor. One extra forward per
/// event.
template <class S>
std::vector<ArticlePrediction> baseline_perturbation(Model<S>& m, const Story& story,
                                                     const AlignmentResult* alignment,
                                                     const BaselineConfig& cfg) {
  if (m.cfg.family != ModelFamily::NonLatent)
    throw ValidationError("baseline_perturbation needs a nonlatent model");
  auto preds = detail::ideology_only_predictions(m, story, alignment);

  std::size_t n_events = 0;
  std::vector<std::size_t> article_of;
  for (std::size_t a = 0; a < story.articles.size(); ++a)
    for (std::size_t i = 0; i < story.articles[a].events.size(); ++i) {
      article_of.push_back(a);
      ++n_events;
    }

  std::vector<double> scores(n_events, 0.0);
  Rng rng(0);
  for (std::size_t j = 0; j < n_events; ++j) {
    std::vector<S> mv(n_events, S(1));
    mv[j] = S(0);
    Tensor<S> mem = Tensor<S>::constant(n_events, 1, std::move(mv));
    Tensor<S> lp = predictor_logprobs(*m.predictor, story, alignment, &mem, m.cfg.scope, rng,
                                      /*training=*/false);
    const std::size_t a = article_of[j];
    const std::size_t cls = label_index(preds[a].ideology_pred);
    const double perturbed = std::exp(static_cast<double>(lp.at(a, cls)));
    scores[j] = std::fabs(preds[a].ideology_prob - perturbed);
  }
  detail::flag_top_fraction<S>(preds, story, scores, cfg.selection_fraction);
  return preds;
}

}  // namespace plens
