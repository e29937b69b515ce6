#pragma once

// Scoring predictions against gold, the partisan-event removal study, and the
// k sweep, plus plain-text and CSV report rendering.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "plens/baselines.hpp"
#include "plens/metrics.hpp"
#include "plens/model.hpp"
#include "plens/train.hpp"

namespace plens {

// ---------------------------------------------------------------------------
// Predictions vs gold.

struct PredictionEval {
  double macro_f1 = 0.0;
  double partisan_f1 = 0.0;
  std::size_t n_articles = 0;
  std::size_t n_events = 0;
  std::vector<std::string> warnings;
};

/// Scores predictions against the corpus labels. Every predicted article must
/// exist in the corpus and cover exactly its events; corpus articles without
/// predictions are skipped with a warning. Events absent from the gold
/// partisan map count as gold-false.
inline PredictionEval evaluate_predictions(const Corpus& corpus,
                                           const std::vector<ArticlePrediction>& preds) {
  std::map<std::string, const Article*> articles;
  for (const auto& story : corpus.stories)
    for (const auto& a : story.articles) articles[a.article_id] = &a;

  PredictionEval out;
  std::vector<Ideology> pred_y, gold_y;
  std::vector<bool> pred_flags, gold_flags;
  std::set<std::string> seen;
  for (const auto& p : preds) {
    auto it = articles.find(p.article_id);
    if (it == articles.end())
      throw ValidationError("prediction for unknown article \"" + p.article_id + "\"");
    if (!seen.insert(p.article_id).second)
      throw ValidationError("duplicate prediction for article \"" + p.article_id + "\"");
    const Article& a = *it->second;
    if (p.events.size() != a.events.size())
      throw ValidationError("prediction event count mismatch for article \"" + p.article_id +
                            "\"");
    pred_y.push_back(p.ideology_pred);
    gold_y.push_back(a.ideology);
    for (std::size_t i = 0; i < a.events.size(); ++i) {
      if (p.events[i].event_id != a.events[i].event_id)
        throw ValidationError("prediction event order mismatch for article \"" + p.article_id +
                              "\" at \"" + p.events[i].event_id + "\"");
      pred_flags.push_back(p.events[i].partisan);
      bool g = false;
      if (corpus.gold_partisan) {
        auto git = corpus.gold_partisan->find(a.events[i].event_id);
        g = git != corpus.gold_partisan->end() && git->second;
      }
      gold_flags.push_back(g);
    }
  }
  if (pred_y.empty()) throw ValidationError("no predictions to evaluate");
  if (seen.size() < articles.size())
    out.warnings.push_back(std::to_string(articles.size() - seen.size()) +
                           " corpus articles have no predictions and were skipped");
  out.macro_f1 = macro_f1(pred_y, gold_y);
  out.partisan_f1 = partisan_f1(pred_flags, gold_flags, &out.warnings);
  out.n_articles = pred_y.size();
  out.n_events = pred_flags.size();
  return out;
}

// ---------------------------------------------------------------------------
// Removal study.

struct RemovalStudyConfig {
  std::vector<int> fractions = {25, 50, 75, 100};  // percent of gold events removed
  std::size_t runs = 10;
  std::uint64_t seed = 0;
  bool exclude_gold_from_random_pool = false;
};

inline void validate_removal_config(const RemovalStudyConfig& cfg) {
  if (cfg.fractions.empty()) throw ValidationError("removal study needs at least one fraction");
  for (int m : cfg.fractions)
    if (m < 0 || m > 100)
      throw ValidationError("removal fractions must lie in [0,100] (0 is the control row)");
  if (cfg.runs < 1) throw ValidationError("removal study needs at least one run");
}

struct RemovalRow {
  int fraction = 0;
  std::string condition;  // "partisan" or "random"
  double macro_f1_mean = 0.0, macro_f1_sd = 0.0;
  double logprob_mean = 0.0, logprob_sd = 0.0;  // mean ln p(true class) per article
  std::size_t skipped_articles = 0;             // total across runs
};

namespace detail {

/// Draws `count` distinct entries of `pool` (partial Fisher-Yates).
inline std::set<std::size_t> sample_without_replacement(std::vector<std::size_t> pool,
                                                        std::size_t count, Rng& rng) {
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < count && !pool.empty(); ++i) {
    const std::size_t j = i + uniform_below(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
    out.insert(pool[i]);
  }
  return out;
}

}  // namespace detail

/// One removal pass over the corpus. Removes floor(m% of the article's gold
/// events), drawn uniformly among gold events (partisan condition) or among
/// the pool (random condition, same count, clamped to the pool size).
/// Articles left empty are dropped and counted; surviving events keep their
/// original rel_pos.
inline Corpus remove_events(const Corpus& corpus, int fraction_percent, bool partisan_condition,
                            bool exclude_gold_from_random_pool, Rng& rng,
                            std::size_t* skipped_articles) {
  if (!corpus.gold_partisan || corpus.gold_partisan->empty())
    throw ValidationError("removal study needs gold partisan annotations");
  const auto& gold = *corpus.gold_partisan;
  Corpus out;
  out.gold_partisan = corpus.gold_partisan;
  for (const auto& story : corpus.stories) {
    Story ns;
    ns.story_id = story.story_id;
    for (const auto& a : story.articles) {
      std::vector<std::size_t> gold_idx, pool_idx;
      for (std::size_t i = 0; i < a.events.size(); ++i) {
        auto it = gold.find(a.events[i].event_id);
        const bool g = it != gold.end() && it->second;
        if (g) gold_idx.push_back(i);
        if (!exclude_gold_from_random_pool || !g) pool_idx.push_back(i);
      }
      const std::size_t r = gold_idx.size() * static_cast<std::size_t>(fraction_percent) / 100;
      const auto removed =
          partisan_condition
              ? detail::sample_without_replacement(gold_idx, r, rng)
              : detail::sample_without_replacement(pool_idx, std::min(r, pool_idx.size()), rng);
      Article na;
      na.article_id = a.article_id;
      na.ideology = a.ideology;
      for (std::size_t i = 0; i < a.events.size(); ++i)
        if (!removed.count(i)) na.events.push_back(a.events[i]);
      if (na.events.empty()) {
        if (skipped_articles) ++*skipped_articles;
        continue;
      }
      ns.articles.push_back(std::move(na));
    }
    if (!ns.articles.empty()) out.stories.push_back(std::move(ns));
  }
  return out;
}

/// Mean and sd of macro-F1 and of mean ln p(true class) across runs, for the
/// partisan and random conditions at each fraction. Fraction iteration is
/// outermost, then run, then condition, all on one seeded stream.
template <class S>
std::vector<RemovalRow> removal_study(Model<S>& model, const Corpus& corpus, const Lexicon& lex,
                                      const RemovalStudyConfig& cfg) {
  validate_removal_config(cfg);
  if (!corpus.gold_partisan || corpus.gold_partisan->empty())
    throw ValidationError("removal study needs gold partisan annotations");
  const bool multi = model.cfg.scope == Scope::MultiArticle;
  Rng rng(cfg.seed);
  std::vector<RemovalRow> rows;
  for (int m : cfg.fractions) {
    RemovalRow part_row, rand_row;
    part_row.fraction = rand_row.fraction = m;
    part_row.condition = "partisan";
    rand_row.condition = "random";
    std::vector<double> f1s_p, f1s_r, lps_p, lps_r;
    for (std::size_t run = 0; run < cfg.runs; ++run) {
      for (bool partisan_condition : {true, false}) {
        auto& row = partisan_condition ? part_row : rand_row;
        Corpus ablated = remove_events(corpus, m, partisan_condition,
                                       cfg.exclude_gold_from_random_pool, rng,
                                       &row.skipped_articles);
        if (ablated.stories.empty())
          throw RuntimeFailure("removal study emptied the corpus at fraction " +
                               std::to_string(m));
        std::map<std::string, AlignmentResult> aligns;
        if (multi) aligns = align_corpus(ablated, lex, model.cfg.match_threshold);
        EvalOutcome ev = evaluate_model(model, ablated, multi ? &aligns : nullptr);
        (partisan_condition ? f1s_p : f1s_r).push_back(ev.macro_f1);
        (partisan_condition ? lps_p : lps_r).push_back(-ev.mean_nll);
      }
    }
    const auto f1p = mean_sd(f1s_p), f1r = mean_sd(f1s_r);
    const auto lpp = mean_sd(lps_p), lpr = mean_sd(lps_r);
    part_row.macro_f1_mean = f1p.mean;
    part_row.macro_f1_sd = f1p.sd;
    part_row.logprob_mean = lpp.mean;
    part_row.logprob_sd = lpp.sd;
    rand_row.macro_f1_mean = f1r.mean;
    rand_row.macro_f1_sd = f1r.sd;
    rand_row.logprob_mean = lpr.mean;
    rand_row.logprob_sd = lpr.sd;
    rows.push_back(std::move(part_row));
    rows.push_back(std::move(rand_row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// k sweep.

struct SweepRow {
  int k_percent = 0;
  double partisan_f1_mean = 0.0, partisan_f1_sd = 0.0;
  double macro_f1_mean = 0.0, macro_f1_sd = 0.0;
};

/// Trains one model per (k, seed) on a fresh split of `corpus` and scores
/// detection on the held-out part. Deterministic per (config, corpus, seeds).
inline std::vector<SweepRow> k_sweep(const Corpus& corpus, const ModelConfig& base_cfg,
                                     const std::vector<int>& k_list,
                                     const std::vector<std::uint64_t>& seeds, const Lexicon& lex,
                                     const std::array<double, 3>& split_ratios = {0.8, 0.1,
                                                                                  0.1}) {
  if (k_list.empty()) throw ValidationError("k_sweep needs at least one k");
  if (seeds.empty()) throw ValidationError("k_sweep needs at least one seed");
  for (int k : k_list)
    if (k < 1 || k > 100) throw ValidationError("k values must lie in (0,100]");
  if (base_cfg.family == ModelFamily::NonLatent)
    throw ValidationError("k_sweep needs a latent model family");
  std::vector<SweepRow> rows;
  for (int k : k_list) {
    std::vector<double> pf1s, mf1s;
    for (std::uint64_t seed : seeds) {
      ModelConfig cfg = base_cfg;
      cfg.sampling.k_percent = k;
      auto parts = split_corpus(corpus, split_ratios, seed);
      Model<float> model = build_model<float>(cfg, seed);
      train_model(model, parts[0], parts[1], lex, seed);
      const Corpus& test = parts[2];
      const bool multi = cfg.scope == Scope::MultiArticle;
      std::map<std::string, AlignmentResult> aligns;
      if (multi) aligns = align_corpus(test, lex, cfg.match_threshold);
      std::vector<ArticlePrediction> preds;
      for (const auto& story : test.stories) {
        auto sp = predict_story(model, story, multi ? &aligns.at(story.story_id) : nullptr);
        preds.insert(preds.end(), sp.begin(), sp.end());
      }
      PredictionEval ev = evaluate_predictions(test, preds);
      pf1s.push_back(ev.partisan_f1);
      mf1s.push_back(ev.macro_f1);
    }
    const auto pf = mean_sd(pf1s), mf = mean_sd(mf1s);
    rows.push_back({k, pf.mean, pf.sd, mf.mean, mf.sd});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Report rendering.

namespace detail {

inline std::string fixed6(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

inline std::string render_table(const std::vector<std::string>& header,
                                const std::vector<std::vector<std::string>>& rows, bool csv) {
  std::ostringstream os;
  if (csv) {
    for (std::size_t c = 0; c < header.size(); ++c)
      os << header[c] << (c + 1 < header.size() ? "," : "\n");
    for (const auto& row : rows)
      for (std::size_t c = 0; c < row.size(); ++c)
        os << row[c] << (c + 1 < row.size() ? "," : "\n");
    return os.str();
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c)
      os << std::left << std::setw(static_cast<int>(width[c]) + 2) << row[c];
    os << "\n";
  };
  emit(header);
  for (const auto& row : rows) emit(row);
  return os.str();
}

}  // namespace detail

inline std::string removal_report(const std::vector<RemovalRow>& rows, bool csv) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows)
    cells.push_back({std::to_string(r.fraction), r.condition, detail::fixed6(r.macro_f1_mean),
                     detail::fixed6(r.macro_f1_sd), detail::fixed6(r.logprob_mean),
                     detail::fixed6(r.logprob_sd), std::to_string(r.skipped_articles)});
  return detail::render_table({"fraction", "condition", "macro_f1_mean", "macro_f1_sd",
                               "logprob_mean", "logprob_sd", "skipped_articles"},
                              cells, csv);
}

inline std::string sweep_report(const std::vector<SweepRow>& rows, bool csv) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows)
    cells.push_back({std::to_string(r.k_percent), detail::fixed6(r.partisan_f1_mean),
                     detail::fixed6(r.partisan_f1_sd), detail::fixed6(r.macro_f1_mean),
                     detail::fixed6(r.macro_f1_sd)});
  return detail::render_table(
      {"k_percent", "partisan_f1_mean", "partisan_f1_sd", "macro_f1_mean", "macro_f1_sd"}, cells,
      csv);
}

}  // namespace plens
