// Cross-article event alignment: overlap-coefficient fixtures, the match
// predicate with base forms / synonyms / stopwords, and align_story checked
// against a brute-force all-pairs aggregation on 1,000 random stories.

#include <gtest/gtest.h>

#include "plens/alignment.hpp"
#include "testutil.hpp"

using namespace plens;

TEST(Overlap, HandFixtures) {
  auto set = [](std::vector<std::string> v) { return std::set<std::string>(v.begin(), v.end()); };
  EXPECT_DOUBLE_EQ(overlap_coefficient(set({"gun", "control", "bill"}), set({"gun", "bill"})),
                   1.0);
  EXPECT_DOUBLE_EQ(overlap_coefficient(set({"a", "b", "c"}), set({"c", "d"})), 0.5);
  EXPECT_DOUBLE_EQ(overlap_coefficient(set({"a", "b"}), set({"c", "d"})), 0.0);
  EXPECT_DOUBLE_EQ(overlap_coefficient(set({"x"}), set({"x"})), 1.0);
  EXPECT_DOUBLE_EQ(overlap_coefficient({}, {}), 1.0);
  EXPECT_DOUBLE_EQ(overlap_coefficient(set({"x"}), {}), 0.0);
  // asymmetric sizes: denominator is the smaller set
  EXPECT_DOUBLE_EQ(overlap_coefficient(set({"a", "b", "c", "d"}), set({"a", "e"})), 0.5);
}

TEST(EventsMatch, PredicateGateAndArgThreshold) {
  Lexicon lex = load_lexicon();  // default stopwords only
  Event x = tu::make_event("x", {"senate"}, {"passed"}, {"the", "gun", "control", "bill"});
  Event z = tu::make_event("z", {"senate"}, {"passed"}, {"gun", "bill"});
  EXPECT_TRUE(events_match(x, z, lex, 0.4));  // args overlap 1.0 after stopword removal

  Event w = tu::make_event("w", {"senate"}, {"rejected"}, {"gun", "bill"});
  EXPECT_FALSE(events_match(x, w, lex, 0.4)) << "disjoint predicates must not match";

  Event y = tu::make_event("y", {"house"}, {"passed"}, {"tax", "cuts"});
  EXPECT_FALSE(events_match(x, y, lex, 0.4)) << "arg overlap 0 is below threshold";

  // absent vs absent arg counts as agreement; absent vs present does not
  Event a1 = tu::make_event("a1", {}, {"resigned"}, {});
  Event a2 = tu::make_event("a2", {}, {"resigned"}, {});
  Event a3 = tu::make_event("a3", {"aide"}, {"resigned"}, {});
  EXPECT_TRUE(events_match(a1, a2, lex, 0.4));
  EXPECT_FALSE(events_match(a1, a3, lex, 0.4));
}

TEST(EventsMatch, BaseFormsAndSynonymsBridgePredicates) {
  Lexicon lex;
  lex.stopwords = default_stopwords();
  lex.base_form["passed"] = "pass";
  lex.base_form["passes"] = "pass";
  lex.synonyms["blocked"] = {"halted", "stopped"};

  Event x = tu::make_event("x", {"senate"}, {"passed"}, {"bill"});
  Event z = tu::make_event("z", {"senate"}, {"passes"}, {"bill"});
  EXPECT_TRUE(events_match(x, z, lex, 0.4)) << "shared base form must bridge";

  Event b1 = tu::make_event("b1", {"court"}, {"blocked"}, {"order"});
  Event b2 = tu::make_event("b2", {"court"}, {"halted"}, {"order"});
  EXPECT_TRUE(events_match(b1, b2, lex, 0.4)) << "synonym key must bridge";

  Lexicon bare;
  bare.stopwords = default_stopwords();
  EXPECT_FALSE(events_match(x, z, bare, 0.4));
  EXPECT_FALSE(events_match(b1, b2, bare, 0.4));
}

TEST(EventsMatch, SymmetricAndThresholdMonotone) {
  Lexicon lex = load_lexicon();
  Rng rng(77);
  std::vector<std::string> vocab = {"court", "senate", "bill", "order", "tax",
                                    "gun",   "plan",   "vote", "veto",  "poll"};
  auto rand_tokens = [&](std::size_t max_n) {
    std::vector<std::string> out;
    const std::size_t n = static_cast<std::size_t>(uniform_below(rng, max_n + 1));
    for (std::size_t i = 0; i < n; ++i)
      out.push_back(vocab[static_cast<std::size_t>(uniform_below(rng, vocab.size()))]);
    return out;
  };
  for (int it = 0; it < 2000; ++it) {
    Event x = tu::make_event("x", rand_tokens(3), {vocab[uniform_below(rng, 4)]}, rand_tokens(3));
    Event z = tu::make_event("z", rand_tokens(3), {vocab[uniform_below(rng, 4)]}, rand_tokens(3));
    for (double t : {0.3, 0.5, 1.0})
      EXPECT_EQ(events_match(x, z, lex, t), events_match(z, x, lex, t));
    if (events_match(x, z, lex, 0.7))
      EXPECT_TRUE(events_match(x, z, lex, 0.4)) << "match at 0.7 implies match at 0.4";
  }
  EXPECT_THROW(events_match(tu::make_event("x", {}, {"p"}, {}),
                            tu::make_event("z", {}, {"p"}, {}), lex, 0.0),
               ValidationError);
}

namespace {

// Independent aggregation: pairwise matches -> per-event article sets ->
// frequency category and cross-side flag. Mirrors the documented definition,
// not the implementation.
AlignmentResult brute_force(const Story& story, const Lexicon& lex, double threshold) {
  AlignmentResult out;
  const std::size_t n = story.articles.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& ev : story.articles[i].events) {
      std::set<std::size_t> holders = {i};
      bool cross = false;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        for (const auto& other : story.articles[j].events) {
          if (!events_match(ev, other, lex, threshold)) continue;
          holders.insert(j);
          if (story.articles[j].ideology != story.articles[i].ideology) cross = true;
        }
      }
      FrequencyCategory cat = FrequencyCategory::Unique;
      if (holders.size() > 1)
        cat = holders.size() == n ? FrequencyCategory::Universal : FrequencyCategory::Shared;
      out.category[ev.event_id] = cat;
      if (cross) out.cross_side_common.insert(ev.event_id);
    }
  }
  return out;
}

Story random_story(Rng& rng, int story_idx) {
  // Small vocab so matches are frequent enough to exercise every category.
  static const std::vector<std::string> preds = {"passed", "blocked", "vetoed", "praised"};
  static const std::vector<std::string> args = {"senate", "bill",  "court", "order",
                                                "tax",    "union", "plan",  "the"};
  auto rand_arg = [&](std::size_t max_n) {
    std::vector<std::string> out;
    const std::size_t k = static_cast<std::size_t>(uniform_below(rng, max_n + 1));
    for (std::size_t i = 0; i < k; ++i)
      out.push_back(args[static_cast<std::size_t>(uniform_below(rng, args.size()))]);
    return out;
  };
  const std::size_t n_articles = 1 + static_cast<std::size_t>(uniform_below(rng, 3));
  std::vector<Article> arts;
  int eid = 0;
  for (std::size_t a = 0; a < n_articles; ++a) {
    std::vector<Event> evs;
    const std::size_t n_events = static_cast<std::size_t>(uniform_below(rng, 7));
    for (std::size_t e = 0; e < n_events; ++e)
      evs.push_back(tu::make_event("s" + std::to_string(story_idx) + "_e" + std::to_string(eid++),
                                   rand_arg(2), {preds[uniform_below(rng, preds.size())]},
                                   rand_arg(2)));
    arts.push_back(tu::make_article("s" + std::to_string(story_idx) + "_a" + std::to_string(a),
                                    bernoulli(rng, 0.5) ? Ideology::Left : Ideology::Right,
                                    std::move(evs)));
  }
  return tu::make_story("s" + std::to_string(story_idx), std::move(arts));
}

}  // namespace

TEST(AlignStory, MatchesBruteForceOnRandomStories) {
  Lexicon lex = load_lexicon();
  lex.base_form["vetoed"] = "veto";
  lex.synonyms["blocked"] = {"halted"};
  Rng rng(4242);
  for (int i = 0; i < 1000; ++i) {
    Story story = random_story(rng, i);
    for (double threshold : {0.4, 0.8}) {
      AlignmentResult got = align_story(story, lex, threshold);
      AlignmentResult want = brute_force(story, lex, threshold);
      ASSERT_EQ(got.category, want.category) << "story " << i << " threshold " << threshold;
      ASSERT_EQ(got.cross_side_common, want.cross_side_common)
          << "story " << i << " threshold " << threshold;
    }
  }
}

TEST(AlignStory, KnownStructure) {
  Lexicon lex = load_lexicon();
  Corpus c = tu::tiny_corpus();
  auto res = align_corpus(c, lex, 0.4);
  const AlignmentResult& s1 = res.at("s1");
  // e1 <-> e3 is the only cross-article match ("the bill" vs "bill"), and the
  // two articles sit on opposite sides.
  EXPECT_EQ(s1.category.at("e1"), FrequencyCategory::Universal);
  EXPECT_EQ(s1.category.at("e3"), FrequencyCategory::Universal);
  EXPECT_EQ(s1.category.at("e2"), FrequencyCategory::Unique);
  EXPECT_EQ(s1.category.at("e4"), FrequencyCategory::Unique);
  EXPECT_EQ(s1.cross_side_common, (std::set<std::string>{"e1", "e3"}));
  // single-article story: everything unique, nothing cross-side
  const AlignmentResult& s2 = res.at("s2");
  EXPECT_EQ(s2.category.at("e5"), FrequencyCategory::Unique);
  EXPECT_EQ(s2.category.at("e6"), FrequencyCategory::Unique);
  EXPECT_TRUE(s2.cross_side_common.empty());
}

TEST(AlignStory, SameSideMatchIsNotCrossSide) {
  Lexicon lex = load_lexicon();
  Story story = tu::make_story(
      "s", {tu::make_article("a0", Ideology::Left,
                             {tu::make_event("e1", {"senate"}, {"passed"}, {"bill"})}),
            tu::make_article("a1", Ideology::Left,
                             {tu::make_event("e2", {"senate"}, {"passed"}, {"bill"})})});
  AlignmentResult res = align_story(story, lex, 0.4);
  EXPECT_EQ(res.category.at("e1"), FrequencyCategory::Universal);
  EXPECT_TRUE(res.cross_side_common.empty());
}

TEST(Lexicon, FileLoadingAndStopwordReplacement) {
  tu::TempFile base("lex_base"), syn("lex_syn"), stop("lex_stop");
  {
    std::ofstream b(base.path);
    b << "passed\tpass\npasses\tpass\n";
    std::ofstream s(syn.path);
    s << "blocked\thalted,stopped\n";
    std::ofstream w(stop.path);
    w << "the\nof\n";
  }
  Lexicon lex = load_lexicon(base.path, syn.path, stop.path);
  EXPECT_EQ(lex.base_of("passed"), "pass");
  EXPECT_EQ(lex.base_of("unknown"), "unknown");
  ASSERT_NE(lex.synonyms_of("blocked"), nullptr);
  EXPECT_TRUE(lex.synonyms_of("blocked")->count("halted"));
  EXPECT_TRUE(lex.is_stopword("the"));
  EXPECT_FALSE(lex.is_stopword("and")) << "stopword file replaces the default list";
  EXPECT_TRUE(load_lexicon().is_stopword("and"));
}
