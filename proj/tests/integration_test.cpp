// End-to-end pipelines on small synthetic corpora: training dynamics, run
// determinism, the event-prior pretraining path, and the k sweep.

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "plens/config.hpp"
#include "plens/eval.hpp"
#include "plens/synthetic.hpp"
#include "testutil.hpp"

using namespace plens;

namespace {

SyntheticConfig small_synth(int stories, int events, std::uint64_t seed) {
  SyntheticConfig sc;
  sc.n_stories = stories;
  sc.events_per_article = events;
  sc.marker_strength = 1.0;
  sc.content_vocab = 200;
  sc.marker_vocab = 12;
  sc.seed = seed;
  return sc;
}

ModelConfig fast_config(Scope scope, ModelFamily family) {
  ModelConfig mc = tu::tiny_config(scope, family);
  mc.epochs = 4;
  mc.batch_size = 8;
  mc.optim.lr = 3e-3;
  mc.optim.warmup_fraction = 0.1;
  return mc;
}

std::vector<nlohmann::json> rows_of(const std::vector<std::string>& lines,
                                    const std::string& split) {
  std::vector<nlohmann::json> out;
  for (const auto& line : lines) {
    auto j = nlohmann::json::parse(line);
    if (j.at("split") == split) out.push_back(std::move(j));
  }
  return out;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST(Training, LossFallsAndBestEpochStateIsRestored) {
  const Corpus corpus = generate_synthetic(small_synth(40, 8, 3));
  const auto parts = split_corpus(corpus, {0.8, 0.2, 0.0}, 1);

  auto m = build_model<float>(fast_config(Scope::MultiArticle, ModelFamily::TwoPlayer), 7);
  const TrainResult res = train_model(m, parts[0], parts[1], Lexicon{}, 11);

  const auto train_rows = rows_of(res.log_lines, "train");
  const auto dev_rows = rows_of(res.log_lines, "dev");
  ASSERT_EQ(train_rows.size(), 4u);
  ASSERT_EQ(dev_rows.size(), 4u);
  EXPECT_LT(train_rows.back().at("loss").get<double>(),
            train_rows.front().at("loss").get<double>());

  double best = 0.0;
  std::size_t best_epoch = 0;
  for (const auto& row : dev_rows) {
    const double f1 = row.at("macro_f1").get<double>();
    if (best_epoch == 0 || f1 > best) {
      best = f1;
      best_epoch = row.at("epoch").get<std::size_t>();
    }
  }
  EXPECT_DOUBLE_EQ(res.best_dev_macro_f1, best);
  EXPECT_EQ(res.best_epoch, best_epoch);

  // The returned model scores the dev set exactly as the best epoch did.
  auto aligns = align_corpus(parts[1], Lexicon{}, m.cfg.match_threshold);
  const EvalOutcome out = evaluate_model(m, parts[1], &aligns);
  EXPECT_NEAR(out.macro_f1, best, 1e-12);
}

TEST(Training, RerunsAreBitIdentical) {
  const Corpus corpus = generate_synthetic(small_synth(24, 6, 5));
  const auto parts = split_corpus(corpus, {0.8, 0.2, 0.0}, 2);
  const ModelConfig mc = fast_config(Scope::MultiArticle, ModelFamily::TwoPlayer);

  auto run = [&](std::uint64_t seed, const std::string& path) {
    auto m = build_model<float>(mc, seed);
    const TrainResult res = train_model(m, parts[0], parts[1], Lexicon{}, seed);
    save_model(m, path, res.log_lines);
    return res;
  };

  tu::TempFile f1("det_a"), f2("det_b"), f3("det_c");
  const TrainResult r1 = run(9, f1.path);
  const TrainResult r2 = run(9, f2.path);
  const TrainResult r3 = run(10, f3.path);

  EXPECT_EQ(r1.log_lines, r2.log_lines);
  EXPECT_EQ(file_bytes(f1.path), file_bytes(f2.path));
  EXPECT_NE(r1.log_lines, r3.log_lines);
}

TEST(Training, ArticleOrderDigestOnlyWhenShuffling) {
  const Corpus corpus = generate_synthetic(small_synth(16, 6, 8));
  const auto parts = split_corpus(corpus, {0.8, 0.2, 0.0}, 3);

  ModelConfig mc = fast_config(Scope::MultiArticle, ModelFamily::TwoPlayer);
  mc.epochs = 3;
  auto m = build_model<float>(mc, 1);
  const TrainResult res = train_model(m, parts[0], parts[1], Lexicon{}, 4);
  const auto rows = rows_of(res.log_lines, "train");
  std::vector<std::string> digests;
  for (const auto& row : rows) {
    ASSERT_TRUE(row.contains("article_order_digest")) << row.dump();
    const std::string d = row.at("article_order_digest").get<std::string>();
    EXPECT_EQ(d.size(), 16u);
    digests.push_back(d);
  }
  // Reshuffling gives each epoch its own presentation order.
  EXPECT_FALSE(digests[0] == digests[1] && digests[1] == digests[2]);

  ModelConfig frozen = mc;
  frozen.shuffle_articles = false;
  auto mf = build_model<float>(frozen, 1);
  const TrainResult res_f = train_model(mf, parts[0], parts[1], Lexicon{}, 4);
  for (const auto& row : rows_of(res_f.log_lines, "train"))
    EXPECT_FALSE(row.contains("article_order_digest"));

  ModelConfig single = mc;
  single.scope = Scope::SingleArticle;
  auto ms = build_model<float>(single, 1);
  const TrainResult res_s = train_model(ms, parts[0], parts[1], Lexicon{}, 4);
  for (const auto& row : rows_of(res_s.log_lines, "train"))
    EXPECT_FALSE(row.contains("article_order_digest"));
}

TEST(EventPrior, PretrainingLearnsLexicalMarkers) {
  const Corpus corpus = generate_synthetic(small_synth(60, 8, 13));
  ModelConfig mc = tu::tiny_config(Scope::MultiArticle, ModelFamily::TwoPlayer);
  mc.vocab = 2003;  // room to hash the marker tokens without collisions
  mc.optim.lr = 3e-3;

  EventPriorModel<float> prior(mc.embedder_dims(), 0.1, 21);
  const auto log = pretrain_event_prior(prior, corpus, 5, 64, mc.optim, 22);
  ASSERT_EQ(log.size(), 5u);
  const auto first = nlohmann::json::parse(log.front());
  const auto last = nlohmann::json::parse(log.back());
  EXPECT_LT(last.at("loss").get<double>(), first.at("loss").get<double>());
  EXPECT_GT(last.at("accuracy").get<double>(), 0.5);

  // Ranking by prior skew beats random flags on marker-planted data.
  BaselineConfig bc;
  bc.selection_fraction = 0.27;  // the generator's partisan share
  bc.partisan_probability = 0.27;
  std::vector<ArticlePrediction> prior_preds, random_preds;
  Rng rng(31);
  for (const auto& story : corpus.stories) {
    auto pp = baseline_event_prior(story, prior, bc);
    prior_preds.insert(prior_preds.end(), pp.begin(), pp.end());
    auto rp = baseline_random(story, bc, rng);
    random_preds.insert(random_preds.end(), rp.begin(), rp.end());
  }
  const auto ev_prior = evaluate_predictions(corpus, prior_preds);
  const auto ev_random = evaluate_predictions(corpus, random_preds);
  EXPECT_GT(ev_prior.partisan_f1, ev_random.partisan_f1 + 0.1);

  // Round trip through the prior-init path leaves a working model.
  auto m = build_model<float>(mc, 2);
  apply_prior_init(m, prior);
  EXPECT_EQ(m.main_store.get("extractor.embed.tok").values(),
            prior.store.get("prior.embed.tok").values());
  const auto parts = split_corpus(corpus, {0.8, 0.2, 0.0}, 6);
  ModelConfig quick = mc;
  quick.epochs = 1;
  m.cfg = quick;
  const TrainResult res = train_model(m, parts[0], parts[1], Lexicon{}, 5);
  EXPECT_EQ(rows_of(res.log_lines, "dev").size(), 1u);
}

TEST(KSweep, TrainsOneModelPerKAndSeed) {
  const Corpus corpus = generate_synthetic(small_synth(24, 6, 17));
  ModelConfig mc = fast_config(Scope::MultiArticle, ModelFamily::TwoPlayer);
  mc.epochs = 2;

  const auto rows = k_sweep(corpus, mc, {20, 50}, {1, 2}, Lexicon{});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].k_percent, 20);
  EXPECT_EQ(rows[1].k_percent, 50);
  for (const auto& r : rows) {
    EXPECT_TRUE(std::isfinite(r.partisan_f1_mean));
    EXPECT_TRUE(std::isfinite(r.macro_f1_mean));
    EXPECT_GE(r.partisan_f1_sd, 0.0);
    EXPECT_GE(r.partisan_f1_mean, 0.0);
    EXPECT_LE(r.partisan_f1_mean, 1.0);
  }

  // Deterministic end to end.
  const auto rows2 = k_sweep(corpus, mc, {20, 50}, {1, 2}, Lexicon{});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_DOUBLE_EQ(rows[i].partisan_f1_mean, rows2[i].partisan_f1_mean);
    EXPECT_DOUBLE_EQ(rows[i].macro_f1_mean, rows2[i].macro_f1_mean);
  }
}
