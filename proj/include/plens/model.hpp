#pragma once

// Model families over the story encoder.
//
//   NonLatent    predictor reads every event and classifies each article.
//   TwoPlayer    an extractor scores events, a relaxed top-k sample gates the
//                predictor's input, and both train against the same
//                classification loss.
//   ThreePlayer  adds an adversarial complement predictor that reads the
//                unselected events; the extractor is pushed toward subsets
//                whose complement carries no ideology signal.
//
// At inference the sample is replaced by a hard per-article top-k of the
// extractor logits, and the ideology call comes from the predictor under that
// hard selection.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "plens/alignment.hpp"
#include "plens/corpus.hpp"
#include "plens/encoder.hpp"
#include "plens/nn.hpp"
#include "plens/optim.hpp"
#include "plens/predictions.hpp"
#include "plens/sampling.hpp"

namespace plens {

enum class ModelFamily { NonLatent, TwoPlayer, ThreePlayer };

inline const char* family_name(ModelFamily f) {
  switch (f) {
    case ModelFamily::NonLatent: return "nonlatent";
    case ModelFamily::TwoPlayer: return "two_player";
    default: return "three_player";
  }
}

inline ModelFamily parse_family(const std::string& s) {
  if (s == "nonlatent") return ModelFamily::NonLatent;
  if (s == "two_player") return ModelFamily::TwoPlayer;
  if (s == "three_player") return ModelFamily::ThreePlayer;
  throw ValidationError("unknown model family: " + s +
                        " (expected nonlatent, two_player, or three_player)");
}

inline Scope parse_scope(const std::string& s) {
  if (s == "single_article") return Scope::SingleArticle;
  if (s == "multi_article") return Scope::MultiArticle;
  throw ValidationError("unknown scope: " + s + " (expected single_article or multi_article)");
}

struct ModelConfig {
  Scope scope = Scope::MultiArticle;
  ModelFamily family = ModelFamily::TwoPlayer;
  std::size_t vocab = 50021;  // hashed token vocabulary
  std::size_t d_tok = 32;
  EncoderConfig encoder;
  SamplingConfig sampling;
  double restriction_weight = 1.0;  // weight on cross-side membership mass
  double match_threshold = 0.4;     // alignment threshold used during training
  bool use_prior_init = false;
  bool k_per_story = false;     // one top-k over the whole story instead of per article
  bool shuffle_articles = true;  // reshuffle article order per epoch (MultiArticle)
  std::size_t epochs = 5;
  std::size_t batch_size = 8;
  std::size_t prior_epochs = 3;
  std::size_t prior_batch_size = 64;
  OptimizerConfig optim;

  EmbedderDims embedder_dims() const { return {vocab, d_tok, encoder.dim}; }
};

inline void validate_model_config(const ModelConfig& cfg) {
  if (cfg.vocab < 101) throw ValidationError("vocab must be at least 101");
  if (cfg.d_tok < 1) throw ValidationError("d_tok must be positive");
  if (cfg.encoder.layers < 1) throw ValidationError("encoder layers must be positive");
  if (cfg.encoder.dim < 1 || cfg.encoder.heads < 1 || cfg.encoder.dim % cfg.encoder.heads != 0)
    throw ValidationError("encoder dim must be a positive multiple of heads");
  if (cfg.encoder.ffn < 1) throw ValidationError("encoder ffn width must be positive");
  if (!(cfg.encoder.dropout >= 0.0 && cfg.encoder.dropout < 1.0))
    throw ValidationError("dropout must lie in [0,1)");
  validate_sampling_config(cfg.sampling);
  if (!(cfg.restriction_weight >= 0.0))
    throw ValidationError("restriction_weight must be non-negative");
  if (!(cfg.match_threshold > 0.0 && cfg.match_threshold <= 1.0))
    throw ValidationError("match_threshold must lie in (0,1]");
  if (cfg.epochs < 1) throw ValidationError("epochs must be positive");
  if (cfg.batch_size < 1) throw ValidationError("batch_size must be positive");
  if (cfg.prior_epochs < 1) throw ValidationError("prior_epochs must be positive");
  if (cfg.prior_batch_size < 1) throw ValidationError("prior_batch_size must be positive");
  validate_optimizer_config(cfg.optim);
}

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["scope"] = scope_name(cfg.scope);
  j["family"] = family_name(cfg.family);
  j["vocab"] = cfg.vocab;
  j["d_tok"] = cfg.d_tok;
  j["encoder"] = {{"layers", cfg.encoder.layers},
                  {"heads", cfg.encoder.heads},
                  {"dim", cfg.encoder.dim},
                  {"ffn", cfg.encoder.ffn},
                  {"dropout", cfg.encoder.dropout}};
  j["sampling"] = {{"k_percent", cfg.sampling.k_percent},
                   {"temperature", cfg.sampling.temperature},
                   {"straight_through", cfg.sampling.straight_through}};
  j["restriction_weight"] = cfg.restriction_weight;
  j["match_threshold"] = cfg.match_threshold;
  j["use_prior_init"] = cfg.use_prior_init;
  j["k_per_story"] = cfg.k_per_story;
  j["shuffle_articles"] = cfg.shuffle_articles;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["prior_epochs"] = cfg.prior_epochs;
  j["prior_batch_size"] = cfg.prior_batch_size;
  j["optim"] = {{"lr", cfg.optim.lr},
                {"weight_decay", cfg.optim.weight_decay},
                {"warmup_fraction", cfg.optim.warmup_fraction},
                {"beta1", cfg.optim.beta1},
                {"beta2", cfg.optim.beta2},
                {"eps", cfg.optim.eps}};
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  try {
    cfg.scope = parse_scope(j.at("scope").get<std::string>());
    cfg.family = parse_family(j.at("family").get<std::string>());
    cfg.vocab = j.at("vocab").get<std::size_t>();
    cfg.d_tok = j.at("d_tok").get<std::size_t>();
    const auto& je = j.at("encoder");
    cfg.encoder.layers = je.at("layers").get<std::size_t>();
    cfg.encoder.heads = je.at("heads").get<std::size_t>();
    cfg.encoder.dim = je.at("dim").get<std::size_t>();
    cfg.encoder.ffn = je.at("ffn").get<std::size_t>();
    cfg.encoder.dropout = je.at("dropout").get<double>();
    const auto& js = j.at("sampling");
    cfg.sampling.k_percent = js.at("k_percent").get<int>();
    cfg.sampling.temperature = js.at("temperature").get<double>();
    cfg.sampling.straight_through = js.at("straight_through").get<bool>();
    cfg.restriction_weight = j.at("restriction_weight").get<double>();
    cfg.match_threshold = j.at("match_threshold").get<double>();
    cfg.use_prior_init = j.at("use_prior_init").get<bool>();
    cfg.k_per_story = j.at("k_per_story").get<bool>();
    cfg.shuffle_articles = j.at("shuffle_articles").get<bool>();
    cfg.epochs = j.at("epochs").get<std::size_t>();
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
    cfg.prior_epochs = j.at("prior_epochs").get<std::size_t>();
    cfg.prior_batch_size = j.at("prior_batch_size").get<std::size_t>();
    const auto& jo = j.at("optim");
    cfg.optim.lr = jo.at("lr").get<double>();
    cfg.optim.weight_decay = jo.at("weight_decay").get<double>();
    cfg.optim.warmup_fraction = jo.at("warmup_fraction").get<double>();
    cfg.optim.beta1 = jo.at("beta1").get<double>();
    cfg.optim.beta2 = jo.at("beta2").get<double>();
    cfg.optim.eps = jo.at("eps").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad model config: ") + e.what());
  }
  validate_model_config(cfg);
  return cfg;
}

/// Hash of the canonical config rendering (nlohmann objects key-sort, so the
/// dump is canonical). Stamped into checkpoints to catch config drift.
inline std::uint64_t model_config_hash(const ModelConfig& cfg) {
  return fnv1a64(model_config_to_json(cfg).dump());
}

inline std::size_t label_index(Ideology y) { return y == Ideology::Left ? 0 : 1; }

/// Event encoder, transformer, and a two-layer classification head.
template <class S>
struct PredictorNet {
  EventEncoder<S> enc;
  TransformerEncoder<S> tr;
  Linear<S> head1, head2;
  double dropout = 0.0;

  PredictorNet() = default;
  PredictorNet(ParameterStore<S>& ps, const std::string& prefix, const ModelConfig& cfg, Rng& rng)
      : enc(ps, prefix, cfg.embedder_dims(), rng),
        tr(ps, prefix, cfg.encoder, rng),
        head1(ps, prefix + ".head1", cfg.encoder.dim, cfg.encoder.dim, rng),
        head2(ps, prefix + ".head2", cfg.encoder.dim, 2, rng),
        dropout(cfg.encoder.dropout) {}
};

/// Event encoder, transformer, and a per-event scalar scoring head.
template <class S>
struct ExtractorNet {
  EventEncoder<S> enc;
  TransformerEncoder<S> tr;
  Linear<S> score;

  ExtractorNet() = default;
  ExtractorNet(ParameterStore<S>& ps, const std::string& prefix, const ModelConfig& cfg, Rng& rng)
      : enc(ps, prefix, cfg.embedder_dims(), rng),
        tr(ps, prefix, cfg.encoder, rng),
        score(ps, prefix + ".score", cfg.encoder.dim, 1, rng) {}
};

/// The complement predictor keeps its own store so the 1:1 alternating
/// optimizer steps never touch the main players' moments.
template <class S>
struct Model {
  ModelConfig cfg;
  ParameterStore<S> main_store;
  ParameterStore<S> comp_store;
  std::optional<ExtractorNet<S>> extractor;
  std::optional<PredictorNet<S>> predictor;
  std::optional<PredictorNet<S>> complement;

  bool latent() const { return cfg.family != ModelFamily::NonLatent; }
};

/// Builds all nets from one seeded stream in a fixed order, so a (config,
/// seed) pair pins every initial weight.
template <class S>
Model<S> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  validate_model_config(cfg);
  Model<S> m;
  m.cfg = cfg;
  Rng rng(seed);
  if (cfg.family != ModelFamily::NonLatent)
    m.extractor.emplace(m.main_store, "extractor", cfg, rng);
  m.predictor.emplace(m.main_store, "predictor", cfg, rng);
  if (cfg.family == ModelFamily::ThreePlayer)
    m.complement.emplace(m.comp_store, "complement", cfg, rng);
  return m;
}

/// Article class log-probabilities, shape (n_articles, 2).
template <class S>
Tensor<S> predictor_logprobs(const PredictorNet<S>& net, const Story& story,
                             const AlignmentResult* alignment, const Tensor<S>* membership,
                             Scope scope, Rng& rng, bool training,
                             StoryEncoding<S>* enc_out = nullptr, bool record_attention = false,
                             bool record_all_layers = false) {
  auto se = contextualize(story, alignment, membership, scope, net.enc, net.tr, rng, training,
                          record_attention, record_all_layers);
  std::vector<Tensor<S>> pooled;
  pooled.reserve(story.articles.size());
  for (std::size_t a = 0; a < story.articles.size(); ++a) pooled.push_back(pool_article(se, a));
  Tensor<S> h = stack_rows(pooled);
  h = relu(net.head1.forward(h));
  h = dropout(h, net.dropout, rng, training);
  Tensor<S> lp = log_softmax_rows(net.head2.forward(h));
  if (enc_out) *enc_out = std::move(se);
  return lp;
}

template <class S>
struct ExtractorOutput {
  Tensor<S> logits;  // (1, n_events) in flattened story order
  StoryEncoding<S> se;
};

/// Extractor scores over the full story (selection never gates its input).
template <class S>
ExtractorOutput<S> extractor_logits_graph(const ExtractorNet<S>& net, const Story& story,
                                          const AlignmentResult* alignment, Scope scope, Rng& rng,
                                          bool training) {
  auto se = contextualize(story, alignment, static_cast<const Tensor<S>*>(nullptr), scope, net.enc,
                          net.tr, rng, training);
  Tensor<S> scores = net.score.forward(se.ctx);  // (n_events, 1)
  ExtractorOutput<S> out;
  out.logits = reshape(scores, 1, se.events.size());
  out.se = std::move(se);
  return out;
}

/// Relaxed top-k membership column, shape (n_events, 1). One sample per
/// article by default; one story-wide sample when k_per_story is set.
template <class S>
Tensor<S> sample_membership_graph(const Tensor<S>& logits,
                                  const std::vector<std::pair<std::size_t, std::size_t>>& spans,
                                  const SamplingConfig& sc, bool k_per_story, Rng& rng) {
  const std::size_t n = logits.cols();
  if (n == 0) throw ValidationError("sample_membership_graph on empty story");
  if (k_per_story) {
    Tensor<S> row = relaxed_sample_graph(logits, resolve_k(n, sc.k_percent), sc.temperature, rng,
                                         sc.straight_through);
    return reshape(row, n, 1);
  }
  std::vector<Tensor<S>> parts;
  for (const auto& [b, e] : spans) {
    if (b == e) continue;
    Tensor<S> z = slice_cols(logits, b, e);
    parts.push_back(relaxed_sample_graph(z, resolve_k(e - b, sc.k_percent), sc.temperature, rng,
                                         sc.straight_through));
  }
  Tensor<S> row = parts.size() == 1 ? parts[0] : concat_cols(parts);
  return reshape(row, n, 1);
}

/// Flattened indices of events aligned across ideologies (order matches the
/// story's current article order).
inline std::vector<std::size_t> cross_side_indices(const Story& story,
                                                   const AlignmentResult& alignment) {
  std::vector<std::size_t> idx;
  std::size_t i = 0;
  for (const auto& a : story.articles)
    for (const auto& ev : a.events) {
      if (alignment.cross_side_common.count(ev.event_id)) idx.push_back(i);
      ++i;
    }
  return idx;
}

/// Mean soft membership over cross-side common events; zero when none exist.
template <class S>
Tensor<S> restriction_loss(const Tensor<S>& membership, const std::vector<std::size_t>& cross_idx) {
  if (cross_idx.empty()) return Tensor<S>::zeros(1, 1);
  return mean(gather_rows(membership, cross_idx));
}

/// Sum over articles of -log p(true ideology).
template <class S>
Tensor<S> story_nll(const Tensor<S>& logprobs, const Story& story) {
  Tensor<S> acc = Tensor<S>::zeros(1, 1);
  for (std::size_t a = 0; a < story.articles.size(); ++a)
    acc = add(acc, pick(logprobs, a, label_index(story.articles[a].ideology)));
  return scale(acc, S(-1));
}

template <class S>
struct StoryLoss {
  Tensor<S> total;                 // scalar graph node
  std::vector<double> membership;  // sampled soft membership (latent families)
};

template <class S>
StoryLoss<S> nonlatent_story_loss(Model<S>& m, const Story& story,
                                  const AlignmentResult* alignment, Rng& rng,
                                  bool training = true) {
  Tensor<S> lp = predictor_logprobs(*m.predictor, story, alignment,
                                    static_cast<const Tensor<S>*>(nullptr), m.cfg.scope, rng,
                                    training);
  StoryLoss<S> out;
  out.total = story_nll(lp, story);
  return out;
}

namespace detail {

/// Restriction term applies only in MultiArticle scope, where cross-side
/// common events are defined.
template <class S>
Tensor<S> add_restriction(Model<S>& m, Tensor<S> total, const Tensor<S>& membership,
                          const Story& story, const AlignmentResult* alignment) {
  if (m.cfg.scope != Scope::MultiArticle || m.cfg.restriction_weight <= 0.0 || !alignment)
    return total;
  auto cross = cross_side_indices(story, *alignment);
  if (cross.empty()) return total;
  return add(total, scale(restriction_loss(membership, cross), S(m.cfg.restriction_weight)));
}

}  // namespace detail

/// Classification loss under a sampled selection, plus the restriction term.
template <class S>
StoryLoss<S> two_player_story_loss(Model<S>& m, const Story& story,
                                   const AlignmentResult* alignment, Rng& rng,
                                   bool training = true) {
  if (!m.extractor) throw ValidationError("two_player_story_loss needs a latent model");
  auto ex = extractor_logits_graph(*m.extractor, story, alignment, m.cfg.scope, rng, training);
  Tensor<S> mem = sample_membership_graph(ex.logits, ex.se.article_spans, m.cfg.sampling,
                                          m.cfg.k_per_story, rng);
  Tensor<S> lp = predictor_logprobs(*m.predictor, story, alignment, &mem, m.cfg.scope, rng,
                                    training);
  StoryLoss<S> out;
  out.total = detail::add_restriction(m, story_nll(lp, story), mem, story, alignment);
  const auto& mv = mem.values();
  out.membership.assign(mv.begin(), mv.end());
  return out;
}

/// Main-player objective: predictor NLL minus complement NLL on the leftover
/// events, plus the restriction term. The complement's own update happens in
/// a separate pass on a detached selection.
template <class S>
StoryLoss<S> three_player_story_loss(Model<S>& m, const Story& story,
                                     const AlignmentResult* alignment, Rng& rng,
                                     bool training = true) {
  if (!m.complement) throw ValidationError("three_player_story_loss needs a three-player model");
  auto ex = extractor_logits_graph(*m.extractor, story, alignment, m.cfg.scope, rng, training);
  Tensor<S> mem = sample_membership_graph(ex.logits, ex.se.article_spans, m.cfg.sampling,
                                          m.cfg.k_per_story, rng);
  Tensor<S> lp = predictor_logprobs(*m.predictor, story, alignment, &mem, m.cfg.scope, rng,
                                    training);
  const std::size_t n = mem.rows();
  Tensor<S> comp_mem = sub(Tensor<S>::full(n, 1, S(1)), mem);
  Tensor<S> lp_c = predictor_logprobs(*m.complement, story, alignment, &comp_mem, m.cfg.scope,
                                      rng, training);
  Tensor<S> total = sub(story_nll(lp, story), story_nll(lp_c, story));
  StoryLoss<S> out;
  out.total = detail::add_restriction(m, total, mem, story, alignment);
  const auto& mv = mem.values();
  out.membership.assign(mv.begin(), mv.end());
  return out;
}

/// Complement training loss against the detached selection from the main
/// pass: plain NLL on the leftover mass.
template <class S>
Tensor<S> complement_story_loss(Model<S>& m, const Story& story, const AlignmentResult* alignment,
                                const std::vector<double>& membership, Rng& rng) {
  if (!m.complement) throw ValidationError("complement_story_loss needs a three-player model");
  const std::size_t n = membership.size();
  std::vector<S> inv(n);
  for (std::size_t i = 0; i < n; ++i) inv[i] = S(1.0 - membership[i]);
  Tensor<S> comp_mem = Tensor<S>::constant(n, 1, std::move(inv));
  Tensor<S> lp_c = predictor_logprobs(*m.complement, story, alignment, &comp_mem, m.cfg.scope,
                                      rng, /*training=*/true);
  return story_nll(lp_c, story);
}

// ---------------------------------------------------------------------------
// Inference.

template <class S>
struct HardSelection {
  std::vector<double> scores;      // extractor logits, flattened story order
  std::vector<double> membership;  // 0/1 per event
  std::vector<const Event*> events;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
};

/// Deterministic hard top-k of the extractor logits (per article unless
/// k_per_story), evaluation mode.
template <class S>
HardSelection<S> hard_select(Model<S>& m, const Story& story, const AlignmentResult* alignment) {
  if (!m.extractor) throw ValidationError("hard_select needs a latent model");
  Rng rng(0);  // eval mode draws nothing
  auto ex = extractor_logits_graph(*m.extractor, story, alignment, m.cfg.scope, rng,
                                   /*training=*/false);
  HardSelection<S> out;
  const auto& z = ex.logits.values();
  out.scores.assign(z.begin(), z.end());
  out.events = std::move(ex.se.events);
  out.spans = std::move(ex.se.article_spans);
  out.membership.assign(out.scores.size(), 0.0);
  if (m.cfg.k_per_story) {
    out.membership = hard_topk(out.scores, resolve_k(out.scores.size(), m.cfg.sampling.k_percent));
  } else {
    for (const auto& [b, e] : out.spans) {
      if (b == e) continue;
      std::vector<double> part(out.scores.begin() + b, out.scores.begin() + e);
      auto sel = hard_topk(part, resolve_k(e - b, m.cfg.sampling.k_percent));
      for (std::size_t i = b; i < e; ++i) out.membership[i] = sel[i - b];
    }
  }
  return out;
}

/// Per-article class log-probabilities in evaluation mode; latent families
/// predict under the hard selection.
template <class S>
std::vector<std::array<double, 2>> story_class_logprobs(Model<S>& m, const Story& story,
                                                        const AlignmentResult* alignment) {
  Rng rng(0);
  Tensor<S> lp;
  if (m.latent()) {
    auto sel = hard_select(m, story, alignment);
    const std::size_t n = sel.membership.size();
    std::vector<S> mv(n);
    for (std::size_t i = 0; i < n; ++i) mv[i] = S(sel.membership[i]);
    Tensor<S> mem = Tensor<S>::constant(n, 1, std::move(mv));
    lp = predictor_logprobs(*m.predictor, story, alignment, &mem, m.cfg.scope, rng,
                            /*training=*/false);
  } else {
    lp = predictor_logprobs(*m.predictor, story, alignment,
                            static_cast<const Tensor<S>*>(nullptr), m.cfg.scope, rng,
                            /*training=*/false);
  }
  std::vector<std::array<double, 2>> out(story.articles.size());
  for (std::size_t a = 0; a < story.articles.size(); ++a)
    out[a] = {static_cast<double>(lp.at(a, 0)), static_cast<double>(lp.at(a, 1))};
  return out;
}

inline Ideology argmax_label(const std::array<double, 2>& lp) {
  // Ties break toward Left (class 0) for determinism.
  return lp[1] > lp[0] ? Ideology::Right : Ideology::Left;
}

/// Full inference for one story: ideology call with probability per article,
/// hard partisan flags with extractor scores per event. NonLatent models get
/// ideology only (flags stay false, scores zero).
template <class S>
std::vector<ArticlePrediction> predict_story(Model<S>& m, const Story& story,
                                             const AlignmentResult* alignment) {
  std::vector<ArticlePrediction> preds(story.articles.size());
  std::optional<HardSelection<S>> sel;
  if (m.latent()) sel = hard_select(m, story, alignment);
  auto lps = story_class_logprobs(m, story, alignment);
  std::size_t flat = 0;
  for (std::size_t a = 0; a < story.articles.size(); ++a) {
    auto& p = preds[a];
    p.article_id = story.articles[a].article_id;
    p.ideology_pred = argmax_label(lps[a]);
    p.ideology_prob = std::exp(lps[a][label_index(p.ideology_pred)]);
    for (const auto& ev : story.articles[a].events) {
      EventPrediction e;
      e.event_id = ev.event_id;
      if (sel) {
        e.partisan = sel->membership[flat] > 0.5;
        e.score = sel->scores[flat];
      }
      ++flat;
      p.events.push_back(std::move(e));
    }
  }
  return preds;
}

}  // namespace plens
