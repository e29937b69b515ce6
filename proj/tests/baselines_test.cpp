// Baseline predictors: random flags, event-prior skew ranking, received
// attention, and per-event perturbation.

#include <gtest/gtest.h>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "plens/alignment.hpp"
#include "plens/baselines.hpp"
#include "testutil.hpp"

using namespace plens;

namespace {

Story big_story(std::size_t n_articles, std::size_t events_per_article) {
  std::vector<Article> arts;
  for (std::size_t a = 0; a < n_articles; ++a) {
    std::vector<Event> evs;
    for (std::size_t i = 0; i < events_per_article; ++i) {
      const std::string tag = std::to_string(a) + "_" + std::to_string(i);
      evs.push_back(tu::make_event("ev" + tag, {"actor" + tag}, {"did" + tag}, {"thing" + tag}));
    }
    arts.push_back(tu::make_article("art" + std::to_string(a),
                                    a % 2 == 0 ? Ideology::Left : Ideology::Right,
                                    std::move(evs)));
  }
  return tu::make_story("big", std::move(arts));
}

std::size_t flagged_in(const ArticlePrediction& p) {
  std::size_t n = 0;
  for (const auto& e : p.events) n += e.partisan ? 1 : 0;
  return n;
}

}  // namespace

TEST(BaselineConfig, ValidationRejectsDegenerateRates) {
  BaselineConfig ok;
  EXPECT_NO_THROW(validate_baseline_config(ok));

  BaselineConfig bad = ok;
  bad.partisan_probability = 0.0;
  EXPECT_THROW(validate_baseline_config(bad), ValidationError);
  bad.partisan_probability = 1.0;
  EXPECT_THROW(validate_baseline_config(bad), ValidationError);

  bad = ok;
  bad.selection_fraction = 0.0;
  EXPECT_THROW(validate_baseline_config(bad), ValidationError);
  bad.selection_fraction = 1.0;
  EXPECT_THROW(validate_baseline_config(bad), ValidationError);
}

TEST(RandomBaseline, FlagRateMatchesProbability) {
  const Story story = big_story(1, 20000);
  BaselineConfig cfg;
  cfg.partisan_probability = 0.3;
  Rng rng(5);
  const auto preds = baseline_random(story, cfg, rng);
  ASSERT_EQ(preds.size(), 1u);
  ASSERT_EQ(preds[0].events.size(), 20000u);

  std::size_t flagged = 0;
  for (const auto& e : preds[0].events) {
    EXPECT_GE(e.score, 0.0);
    EXPECT_LT(e.score, 1.0);
    EXPECT_EQ(e.partisan, e.score > 1.0 - cfg.partisan_probability);
    flagged += e.partisan ? 1 : 0;
  }
  // 5 sigma around Binomial(20000, 0.3).
  const double sd = std::sqrt(0.3 * 0.7 / 20000.0);
  EXPECT_NEAR(static_cast<double>(flagged) / 20000.0, 0.3, 5.0 * sd);
}

TEST(RandomBaseline, FairCoinIdeologyAndSeedDeterminism) {
  const Story story = big_story(400, 2);
  BaselineConfig cfg;

  Rng r1(9), r2(9), r3(10);
  const auto a = baseline_random(story, cfg, r1);
  const auto b = baseline_random(story, cfg, r2);
  const auto c = baseline_random(story, cfg, r3);

  std::size_t rights = 0;
  bool same_ab = true, same_ac = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    rights += a[i].ideology_pred == Ideology::Right ? 1 : 0;
    EXPECT_DOUBLE_EQ(a[i].ideology_prob, 0.5);
    if (a[i].ideology_pred != b[i].ideology_pred) same_ab = false;
    for (std::size_t j = 0; j < a[i].events.size(); ++j) {
      if (a[i].events[j].score != b[i].events[j].score) same_ab = false;
      if (a[i].events[j].score != c[i].events[j].score) same_ac = false;
    }
  }
  EXPECT_TRUE(same_ab);
  EXPECT_FALSE(same_ac);
  // 5 sigma around Binomial(400, 0.5).
  EXPECT_NEAR(static_cast<double>(rights) / 400.0, 0.5, 5.0 * std::sqrt(0.25 / 400.0));
}

TEST(EventPriorBaseline, FlagsTopSkewWithMajorityVote) {
  const Story story = big_story(2, 10);
  ModelConfig mc = tu::tiny_config(Scope::MultiArticle, ModelFamily::NonLatent);
  EventPriorModel<float> prior(mc.embedder_dims(), 0.0, 321);
  BaselineConfig cfg;
  cfg.selection_fraction = 0.3;

  const auto preds = baseline_event_prior(story, prior, cfg);
  ASSERT_EQ(preds.size(), 2u);

  for (std::size_t a = 0; a < 2; ++a) {
    const auto& art = story.articles[a];
    std::vector<const Event*> events;
    for (const auto& ev : art.events) events.push_back(&ev);
    const auto probs = prior_probabilities(prior, events);

    const std::size_t want_k = resolve_fraction(10, 0.3);
    EXPECT_EQ(flagged_in(preds[a]), want_k);

    // Scores are the absolute skew, and every flagged score dominates every
    // unflagged one.
    std::size_t votes_left = 0, votes_right = 0;
    for (std::size_t i = 0; i < events.size(); ++i) {
      EXPECT_NEAR(preds[a].events[i].score, std::fabs(probs[i][0] - probs[i][1]), 1e-12);
      if (preds[a].events[i].partisan)
        ++(probs[i][1] > probs[i][0] ? votes_right : votes_left);
    }
    for (const auto& ei : preds[a].events)
      for (const auto& ej : preds[a].events)
        if (ei.partisan && !ej.partisan) EXPECT_GE(ei.score, ej.score);

    const Ideology want_side = votes_right > votes_left ? Ideology::Right : Ideology::Left;
    EXPECT_EQ(preds[a].ideology_pred, want_side);
    EXPECT_NEAR(preds[a].ideology_prob,
                static_cast<double>(std::max(votes_left, votes_right)) /
                    static_cast<double>(want_k),
                1e-12);
  }

  // Same inputs, same outputs: the ranking is deterministic.
  const auto again = baseline_event_prior(story, prior, cfg);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t i = 0; i < 10; ++i)
      EXPECT_EQ(preds[a].events[i].partisan, again[a].events[i].partisan);
}

TEST(RankingBaselines, RequireNonLatentPredictor) {
  const Corpus c = tu::tiny_corpus();
  const Story& story = c.stories[0];
  const AlignmentResult al = align_story(story, Lexicon{}, 0.4);
  BaselineConfig cfg;

  auto latent = build_model<float>(tu::tiny_config(Scope::MultiArticle, ModelFamily::TwoPlayer), 1);
  EXPECT_THROW(baseline_attention(latent, story, &al, cfg), ValidationError);
  EXPECT_THROW(baseline_perturbation(latent, story, &al, cfg), ValidationError);
}

TEST(AttentionBaseline, FlagsTopReceivedAttentionPerArticle) {
  const Story story = big_story(2, 8);
  const AlignmentResult al = align_story(story, Lexicon{}, 0.4);
  auto m = build_model<float>(tu::tiny_config(Scope::MultiArticle, ModelFamily::NonLatent), 77);
  BaselineConfig cfg;
  cfg.selection_fraction = 0.25;

  const auto preds = baseline_attention(m, story, &al, cfg);
  ASSERT_EQ(preds.size(), 2u);
  for (std::size_t a = 0; a < 2; ++a) {
    EXPECT_EQ(flagged_in(preds[a]), resolve_fraction(8, 0.25));
    EXPECT_GE(preds[a].ideology_prob, 0.5 - 1e-9);
    ASSERT_EQ(preds[a].events.size(), 8u);
    for (std::size_t i = 0; i < 8; ++i) {
      EXPECT_EQ(preds[a].events[i].event_id, story.articles[a].events[i].event_id);
      EXPECT_GT(preds[a].events[i].score, 0.0);  // every event receives some mass
    }
    for (const auto& ei : preds[a].events)
      for (const auto& ej : preds[a].events)
        if (ei.partisan && !ej.partisan) EXPECT_GE(ei.score, ej.score);
  }

  // Summing over all blocks changes the score scale but keeps counts.
  BaselineConfig all = cfg;
  all.attention_all_layers = true;
  const auto preds_all = baseline_attention(m, story, &al, all);
  for (std::size_t a = 0; a < 2; ++a) {
    EXPECT_EQ(flagged_in(preds_all[a]), resolve_fraction(8, 0.25));
    double sum_last = 0.0, sum_all = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
      sum_last += preds[a].events[i].score;
      sum_all += preds_all[a].events[i].score;
    }
    EXPECT_GE(sum_all, sum_last - 1e-6);  // superset of recorded mass
  }

  // Eval-mode inference is deterministic.
  const auto again = baseline_attention(m, story, &al, cfg);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t i = 0; i < 8; ++i)
      EXPECT_DOUBLE_EQ(preds[a].events[i].score, again[a].events[i].score);
}

TEST(PerturbationBaseline, ScoresProbabilityShiftFromZeroingEvents) {
  const Story story = big_story(2, 6);
  const AlignmentResult al = align_story(story, Lexicon{}, 0.4);
  auto m = build_model<float>(tu::tiny_config(Scope::MultiArticle, ModelFamily::NonLatent), 123);
  BaselineConfig cfg;
  cfg.selection_fraction = 0.34;

  const auto preds = baseline_perturbation(m, story, &al, cfg);
  ASSERT_EQ(preds.size(), 2u);
  for (std::size_t a = 0; a < 2; ++a) {
    EXPECT_EQ(flagged_in(preds[a]), resolve_fraction(6, 0.34));
    for (const auto& e : preds[a].events) EXPECT_GE(e.score, 0.0);
    for (const auto& ei : preds[a].events)
      for (const auto& ej : preds[a].events)
        if (ei.partisan && !ej.partisan) EXPECT_GE(ei.score, ej.score);

    // Ideology matches the unperturbed predictor.
    const auto lps = story_class_logprobs(m, story, &al);
    EXPECT_EQ(preds[a].ideology_pred, argmax_label(lps[a]));
  }

  const auto again = baseline_perturbation(m, story, &al, cfg);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t i = 0; i < 6; ++i) {
      EXPECT_DOUBLE_EQ(preds[a].events[i].score, again[a].events[i].score);
      EXPECT_EQ(preds[a].events[i].partisan, again[a].events[i].partisan);
    }
}
