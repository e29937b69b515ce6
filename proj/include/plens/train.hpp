#pragma once

// Training: event-prior pretraining, the main loop with per-epoch dev
// selection, and checkpoint save/load. All randomness flows through one
// seeded stream in a fixed order, so (config, data, seed) pins every weight;
// evaluation draws nothing.

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "plens/checkpoint.hpp"
#include "plens/lexicon.hpp"
#include "plens/metrics.hpp"
#include "plens/model.hpp"

namespace plens {

// ---------------------------------------------------------------------------
// Event prior: classifies the source ideology from a single event.

template <class S>
struct EventPriorModel {
  EmbedderDims dims;
  double dropout = 0.1;
  ParameterStore<S> store;
  EventEncoder<S> enc;  // only the token table and role projection train here
  Linear<S> head1, head2;

  EventPriorModel() = default;
  EventPriorModel(const EmbedderDims& dims_, double dropout_, std::uint64_t seed)
      : dims(dims_), dropout(dropout_) {
    Rng rng(seed);
    enc = EventEncoder<S>(store, "prior", dims, rng);
    head1 = Linear<S>(store, "prior.head1", dims.d_model, dims.d_model, rng);
    head2 = Linear<S>(store, "prior.head2", dims.d_model, 2, rng);
  }
};

/// (n_events, 2) class log-probabilities, one row per event.
template <class S>
Tensor<S> prior_logprobs(const EventPriorModel<S>& prior, const std::vector<const Event*>& events,
                         Rng& rng, bool training) {
  if (events.empty()) throw ValidationError("prior_logprobs on empty batch");
  std::vector<Tensor<S>> rows;
  rows.reserve(events.size());
  for (const Event* ev : events) rows.push_back(embed_event(*ev, prior.enc));
  Tensor<S> h = stack_rows(rows);
  h = relu(prior.head1.forward(h));
  h = dropout(h, prior.dropout, rng, training);
  return log_softmax_rows(prior.head2.forward(h));
}

/// {P(left), P(right)} per event, evaluation mode.
template <class S>
std::vector<std::array<double, 2>> prior_probabilities(const EventPriorModel<S>& prior,
                                                       const std::vector<const Event*>& events) {
  Rng rng(0);
  auto lp = prior_logprobs(prior, events, rng, /*training=*/false);
  std::vector<std::array<double, 2>> out(events.size());
  for (std::size_t i = 0; i < events.size(); ++i)
    out[i] = {std::exp(static_cast<double>(lp.at(i, 0))),
              std::exp(static_cast<double>(lp.at(i, 1)))};
  return out;
}

/// Cross-entropy training of the prior on every (event, article ideology)
/// pair. Returns one JSONL log line per epoch.
template <class S>
std::vector<std::string> pretrain_event_prior(EventPriorModel<S>& prior, const Corpus& corpus,
                                              std::size_t epochs, std::size_t batch_size,
                                              OptimizerConfig optim, std::uint64_t seed) {
  if (epochs < 1 || batch_size < 1)
    throw ValidationError("prior epochs and batch size must be positive");
  std::vector<const Event*> events;
  std::vector<std::size_t> labels;
  for (const auto& story : corpus.stories)
    for (const auto& a : story.articles)
      for (const auto& ev : a.events) {
        events.push_back(&ev);
        labels.push_back(label_index(a.ideology));
      }
  if (events.empty()) throw ValidationError("pretrain_event_prior on empty corpus");
  const std::size_t n = events.size();
  optim.total_steps = std::max<std::uint64_t>(1, epochs * ((n + batch_size - 1) / batch_size));
  validate_optimizer_config(optim);

  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::string> log;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    shuffle_inplace(order, rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b0 = 0; b0 < n; b0 += batch_size) {
      const std::size_t b1 = std::min(n, b0 + batch_size);
      std::vector<const Event*> batch(b1 - b0);
      for (std::size_t i = b0; i < b1; ++i) batch[i - b0] = events[order[i]];
      prior.store.zero_grad();
      Tensor<S> lp = prior_logprobs(prior, batch, rng, /*training=*/true);
      Tensor<S> acc = Tensor<S>::zeros(1, 1);
      for (std::size_t i = b0; i < b1; ++i) {
        const std::size_t y = labels[order[i]];
        acc = add(acc, pick(lp, i - b0, y));
        const double l0 = lp.at(i - b0, 0), l1 = lp.at(i - b0, 1);
        if ((l1 > l0 ? 1u : 0u) == y) ++correct;
      }
      Tensor<S> loss = scale(acc, S(-1.0 / static_cast<double>(b1 - b0)));
      const double lv = loss.item();
      if (!std::isfinite(lv))
        throw RuntimeFailure("event-prior training diverged at epoch " + std::to_string(epoch));
      backward(loss);
      adamw_step(prior.store, optim);
      loss_sum += lv * static_cast<double>(b1 - b0);
    }
    nlohmann::json row = {{"epoch", epoch},
                          {"split", "train"},
                          {"loss", loss_sum / static_cast<double>(n)},
                          {"accuracy", static_cast<double>(correct) / static_cast<double>(n)}};
    log.push_back(row.dump());
  }
  return log;
}

/// Copies the prior's token table and role projection into the extractor and
/// predictor embedders (context embeddings stay at their fresh init; the
/// prior never trains them).
template <class S>
void apply_prior_init(Model<S>& m, const EventPriorModel<S>& prior) {
  const EmbedderDims want = m.cfg.embedder_dims();
  if (prior.dims.vocab != want.vocab || prior.dims.d_tok != want.d_tok ||
      prior.dims.d_model != want.d_model)
    throw ValidationError("prior embedder dims do not match the model config");
  for (const char* suffix : {".embed.tok", ".embed.proj"}) {
    const auto& src = prior.store.get(std::string("prior") + suffix).values();
    if (m.extractor) m.main_store.assign_values(std::string("extractor") + suffix, src);
    m.main_store.assign_values(std::string("predictor") + suffix, src);
  }
}

// ---------------------------------------------------------------------------
// Evaluation.

struct EvalOutcome {
  double macro_f1 = 0.0;
  double mean_nll = 0.0;  // mean over articles of -ln p(true ideology)
  std::size_t n_articles = 0;
};

template <class S>
EvalOutcome evaluate_model(Model<S>& m, const Corpus& corpus,
                           const std::map<std::string, AlignmentResult>* alignments) {
  std::vector<Ideology> pred, gold;
  double nll = 0.0;
  for (const auto& story : corpus.stories) {
    const AlignmentResult* al = nullptr;
    if (alignments) {
      auto it = alignments->find(story.story_id);
      if (it == alignments->end())
        throw RuntimeFailure("missing alignment for story " + story.story_id);
      al = &it->second;
    }
    auto lps = story_class_logprobs(m, story, al);
    for (std::size_t a = 0; a < story.articles.size(); ++a) {
      pred.push_back(argmax_label(lps[a]));
      gold.push_back(story.articles[a].ideology);
      nll -= lps[a][label_index(story.articles[a].ideology)];
    }
  }
  if (pred.empty()) throw ValidationError("evaluate_model on empty corpus");
  EvalOutcome out;
  out.macro_f1 = macro_f1(pred, gold);
  out.mean_nll = nll / static_cast<double>(pred.size());
  out.n_articles = pred.size();
  return out;
}

// ---------------------------------------------------------------------------
// Main training loop.

struct TrainResult {
  std::vector<std::string> log_lines;  // JSONL: one train and one dev row per epoch
  double best_dev_macro_f1 = 0.0;
  std::size_t best_epoch = 0;  // 1-based
};

/// Trains in place and leaves the model at its best-dev-epoch state
/// (parameters and optimizer moments). Loss rows report the mean per-article
/// training objective; dev rows report mean NLL and macro-F1 under hard
/// inference. Aborts on a non-finite loss.
template <class S>
TrainResult train_model(Model<S>& m, const Corpus& train_corpus, const Corpus& dev_corpus,
                        const Lexicon& lex, std::uint64_t seed) {
  validate_model_config(m.cfg);
  if (train_corpus.stories.empty()) throw ValidationError("train corpus is empty");
  if (dev_corpus.stories.empty()) throw ValidationError("dev corpus is empty");

  const bool multi = m.cfg.scope == Scope::MultiArticle;
  std::map<std::string, AlignmentResult> train_align, dev_align;
  if (multi) {
    train_align = align_corpus(train_corpus, lex, m.cfg.match_threshold);
    dev_align = align_corpus(dev_corpus, lex, m.cfg.match_threshold);
  }

  std::vector<Story> stories = train_corpus.stories;  // article order mutates per epoch
  const std::size_t n_stories = stories.size();
  OptimizerConfig oc = m.cfg.optim;
  oc.total_steps = std::max<std::uint64_t>(
      1, m.cfg.epochs * ((n_stories + m.cfg.batch_size - 1) / m.cfg.batch_size));

  Rng rng(seed);
  std::vector<std::size_t> order(n_stories);
  std::iota(order.begin(), order.end(), 0);

  TrainResult res;
  typename ParameterStore<S>::StateSnapshot best_main, best_comp;
  bool have_best = false;

  for (std::size_t epoch = 1; epoch <= m.cfg.epochs; ++epoch) {
    shuffle_inplace(order, rng);
    std::uint64_t order_digest = 0;
    if (multi && m.cfg.shuffle_articles) {
      std::string desc;  // epoch presentation order, hashed into the log
      for (std::size_t si : order) {
        Story& st = stories[si];
        shuffle_inplace(st.articles, rng);
        desc += st.story_id;
        desc += ':';
        for (const auto& a : st.articles) {
          desc += a.article_id;
          desc += ',';
        }
        desc += ';';
      }
      order_digest = fnv1a64(desc);
    }

    double loss_sum = 0.0;
    std::size_t article_sum = 0;
    for (std::size_t b0 = 0; b0 < n_stories; b0 += m.cfg.batch_size) {
      const std::size_t b1 = std::min(n_stories, b0 + m.cfg.batch_size);
      m.main_store.zero_grad();
      if (m.complement) m.comp_store.zero_grad();
      Tensor<S> acc = Tensor<S>::zeros(1, 1);
      std::size_t n_art = 0;
      std::vector<std::vector<double>> memberships;
      for (std::size_t i = b0; i < b1; ++i) {
        const Story& story = stories[order[i]];
        const AlignmentResult* al = multi ? &train_align.at(story.story_id) : nullptr;
        StoryLoss<S> sl;
        if (m.cfg.family == ModelFamily::NonLatent)
          sl = nonlatent_story_loss(m, story, al, rng);
        else if (m.cfg.family == ModelFamily::TwoPlayer)
          sl = two_player_story_loss(m, story, al, rng);
        else
          sl = three_player_story_loss(m, story, al, rng);
        acc = add(acc, sl.total);
        n_art += story.articles.size();
        if (m.cfg.family == ModelFamily::ThreePlayer)
          memberships.push_back(std::move(sl.membership));
      }
      Tensor<S> loss = scale(acc, S(1.0 / static_cast<double>(n_art)));
      const double lv = loss.item();
      if (!std::isfinite(lv))
        throw RuntimeFailure("training diverged: non-finite loss at epoch " +
                             std::to_string(epoch));
      backward(loss);
      adamw_step(m.main_store, oc);

      if (m.cfg.family == ModelFamily::ThreePlayer) {
        // 1:1 alternation: the complement updates on the selection that drove
        // the main step, detached from the extractor.
        m.comp_store.zero_grad();
        Tensor<S> acc_c = Tensor<S>::zeros(1, 1);
        for (std::size_t i = b0; i < b1; ++i) {
          const Story& story = stories[order[i]];
          const AlignmentResult* al = multi ? &train_align.at(story.story_id) : nullptr;
          acc_c = add(acc_c, complement_story_loss(m, story, al, memberships[i - b0], rng));
        }
        Tensor<S> loss_c = scale(acc_c, S(1.0 / static_cast<double>(n_art)));
        const double lcv = loss_c.item();
        if (!std::isfinite(lcv))
          throw RuntimeFailure("training diverged: non-finite complement loss at epoch " +
                               std::to_string(epoch));
        backward(loss_c);
        adamw_step(m.comp_store, oc);
      }

      loss_sum += lv * static_cast<double>(n_art);
      article_sum += n_art;
    }

    nlohmann::json train_row = {{"epoch", epoch},
                                {"split", "train"},
                                {"loss", loss_sum / static_cast<double>(article_sum)},
                                {"macro_f1", nullptr}};
    if (multi && m.cfg.shuffle_articles) train_row["article_order_digest"] = hex_u64(order_digest);
    res.log_lines.push_back(train_row.dump());

    EvalOutcome dev = evaluate_model(m, dev_corpus, multi ? &dev_align : nullptr);
    nlohmann::json dev_row = {{"epoch", epoch},
                              {"split", "dev"},
                              {"loss", dev.mean_nll},
                              {"macro_f1", dev.macro_f1}};
    res.log_lines.push_back(dev_row.dump());

    if (!have_best || dev.macro_f1 > res.best_dev_macro_f1) {
      have_best = true;
      res.best_dev_macro_f1 = dev.macro_f1;
      res.best_epoch = epoch;
      best_main = m.main_store.snapshot_state();
      if (m.complement) best_comp = m.comp_store.snapshot_state();
    }
  }

  m.main_store.restore_state(best_main);
  if (m.complement) m.comp_store.restore_state(best_comp);
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoint wrappers. Metadata carries the config and the training log, so a
// checkpoint alone reconstructs the model; no timestamps, so identical runs
// produce identical bytes.

inline void save_model(const Model<float>& m, const std::string& path,
                       const std::vector<std::string>& log_lines = {}) {
  nlohmann::json meta;
  meta["kind"] = "model";
  meta["config"] = model_config_to_json(m.cfg);
  meta["log"] = log_lines;
  std::vector<const ParameterStore<float>*> stores{&m.main_store};
  if (m.cfg.family == ModelFamily::ThreePlayer) stores.push_back(&m.comp_store);
  save_checkpoint(stores, path, model_config_hash(m.cfg), meta.dump());
}

inline Model<float> load_model(const std::string& path,
                               std::vector<std::string>* log_out = nullptr) {
  const CheckpointHeader hdr = peek_checkpoint(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(hdr.metadata);
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("checkpoint metadata is not JSON: " + path);
  }
  if (meta.value("kind", std::string()) != "model")
    throw ValidationError("not a model checkpoint: " + path);
  ModelConfig cfg = model_config_from_json(meta.at("config"));
  if (model_config_hash(cfg) != hdr.config_hash)
    throw ValidationError("checkpoint config hash mismatch: " + path);
  Model<float> m = build_model<float>(cfg, 0);
  std::vector<ParameterStore<float>*> stores{&m.main_store};
  if (cfg.family == ModelFamily::ThreePlayer) stores.push_back(&m.comp_store);
  load_checkpoint(stores, path);
  if (log_out && meta.contains("log")) *log_out = meta.at("log").get<std::vector<std::string>>();
  return m;
}

inline void save_prior(const EventPriorModel<float>& prior, const std::string& path,
                       const std::vector<std::string>& log_lines = {}) {
  nlohmann::json meta;
  meta["kind"] = "event_prior";
  meta["dims"] = {{"vocab", prior.dims.vocab},
                  {"d_tok", prior.dims.d_tok},
                  {"d_model", prior.dims.d_model}};
  meta["dropout"] = prior.dropout;
  meta["log"] = log_lines;
  save_checkpoint({&prior.store}, path, fnv1a64(meta.at("dims").dump()), meta.dump());
}

inline EventPriorModel<float> load_prior(const std::string& path) {
  const CheckpointHeader hdr = peek_checkpoint(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(hdr.metadata);
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("checkpoint metadata is not JSON: " + path);
  }
  if (meta.value("kind", std::string()) != "event_prior")
    throw ValidationError("not an event-prior checkpoint: " + path);
  EmbedderDims dims;
  try {
    const auto& jd = meta.at("dims");
    dims.vocab = jd.at("vocab").get<std::size_t>();
    dims.d_tok = jd.at("d_tok").get<std::size_t>();
    dims.d_model = jd.at("d_model").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad prior checkpoint metadata: ") + e.what());
  }
  EventPriorModel<float> prior(dims, meta.value("dropout", 0.1), 0);
  load_checkpoint({&prior.store}, path);
  return prior;
}

}  // namespace plens
