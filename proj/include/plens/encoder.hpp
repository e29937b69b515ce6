#pragma once

// Event embedding and story contextualization.
//
// An event embeds as e = [e_pred; e_arg0; e_arg1] * W, where each role vector
// is the mean of its tokens' hashed-table embeddings and an absent argument
// contributes a zero vector. By construction e depends only on the event's
// own tokens.
//
// Contextualization builds the scope's sequence ((m (*) e) + E), where E adds,
// per scope:
//   SingleArticle  position embedding only (rel_pos * learned vector);
//                  each article is encoded in its own transformer run, so
//                  cross-article influence is structurally impossible.
//   MultiArticle   article-index + frequency-category + position embeddings,
//                  with learned separator rows between articles (a separator
//                  carries the preceding article's article embedding only).

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "plens/alignment.hpp"
#include "plens/corpus.hpp"
#include "plens/nn.hpp"

namespace plens {

enum class Scope { SingleArticle, MultiArticle };

inline const char* scope_name(Scope s) {
  return s == Scope::SingleArticle ? "single_article" : "multi_article";
}

struct EmbedderDims {
  std::size_t vocab = 50021;  // hashed vocabulary size
  std::size_t d_tok = 32;
  std::size_t d_model = 64;
};

inline std::size_t hash_token(const std::string& token, std::size_t vocab) {
  return static_cast<std::size_t>(fnv1a64(token) % static_cast<std::uint64_t>(vocab));
}

template <class S>
struct EventEncoder {
  EmbedderDims dims;
  Tensor<S> tok_table;    // (V, d_tok)
  Tensor<S> role_proj;    // (3*d_tok, d_model); no bias, e = W[e_pred; e_arg0; e_arg1]
  Tensor<S> article_emb;  // (3, d_model), indexed by article position in story
  Tensor<S> freq_emb;     // (3, d_model): Unique/Shared/Universal
  Tensor<S> pos_vec;      // (1, d_model), scaled by rel_pos
  Tensor<S> sep_emb;      // (1, d_model)

  EventEncoder() = default;
  EventEncoder(ParameterStore<S>& ps, const std::string& prefix, const EmbedderDims& dims_,
               Rng& rng)
      : dims(dims_) {
    tok_table = ps.create(prefix + ".embed.tok", dims.vocab, dims.d_tok,
                          detail::uniform_init<S>(dims.vocab, dims.d_tok, rng));
    role_proj = ps.create(prefix + ".embed.proj", 3 * dims.d_tok, dims.d_model,
                          detail::uniform_init<S>(3 * dims.d_tok, dims.d_model, rng));
    article_emb = ps.create(prefix + ".embed.article", 3, dims.d_model,
                            detail::uniform_init<S>(3, dims.d_model, rng));
    freq_emb = ps.create(prefix + ".embed.freq", 3, dims.d_model,
                         detail::uniform_init<S>(3, dims.d_model, rng));
    pos_vec = ps.create(prefix + ".embed.pos", 1, dims.d_model,
                        detail::uniform_init<S>(1, dims.d_model, rng));
    sep_emb = ps.create(prefix + ".embed.sep", 1, dims.d_model,
                        detail::uniform_init<S>(1, dims.d_model, rng));
  }
};

template <class S>
Tensor<S> embed_event(const Event& ev, const EventEncoder<S>& enc) {
  auto role = [&](const std::vector<std::string>* tokens) -> Tensor<S> {
    if (!tokens || tokens->empty()) return Tensor<S>::zeros(1, enc.dims.d_tok);
    std::vector<std::size_t> idx;
    idx.reserve(tokens->size());
    for (const auto& t : *tokens) idx.push_back(hash_token(t, enc.dims.vocab));
    return mean_rows(gather_rows(enc.tok_table, std::move(idx)));
  };
  Tensor<S> cat = concat_cols<S>({role(&ev.predicate), role(ev.arg0 ? &*ev.arg0 : nullptr),
                                  role(ev.arg1 ? &*ev.arg1 : nullptr)});
  return matmul(cat, enc.role_proj);
}

/// Flattened event order: the story's articles in their current order, each
/// article's events in article order. Membership vectors align with it.
template <class S>
struct StoryEncoding {
  Tensor<S> ctx;  // (n_events, d_model), separators dropped
  std::vector<const Event*> events;
  std::vector<std::size_t> article_of;
  std::vector<std::pair<std::size_t, std::size_t>> article_spans;  // [begin,end) per article
  std::vector<double> received_attention;  // per event; filled when recording
};

namespace detail {

inline std::size_t frequency_index(FrequencyCategory c) {
  switch (c) {
    case FrequencyCategory::Unique: return 0;
    case FrequencyCategory::Shared: return 1;
    default: return 2;
  }
}

/// Received attention per kept row: sum over heads and query positions of the
/// recorded attention columns.
template <class S>
void accumulate_received(const std::vector<std::vector<S>>& heads, std::size_t T,
                         const std::vector<std::size_t>& rows, std::size_t out_offset,
                         std::vector<double>& out) {
  for (const auto& attn : heads) {
    for (std::size_t qi = 0; qi < T; ++qi)
      for (std::size_t r = 0; r < rows.size(); ++r)
        out[out_offset + r] += static_cast<double>(attn[qi * T + rows[r]]);
  }
}

}  // namespace detail

/// Encodes a story under the given scope. `membership`, when present, is an
/// (n_events, 1) column aligned with the flattened event order and multiplies
/// event embeddings before context embeddings are added. `alignment` is
/// required in MultiArticle scope (frequency embedding lookups).
template <class S>
StoryEncoding<S> contextualize(const Story& story, const AlignmentResult* alignment,
                               const Tensor<S>* membership, Scope scope,
                               const EventEncoder<S>& enc, const TransformerEncoder<S>& tr,
                               Rng& rng, bool training, bool record_attention = false,
                               bool record_all_layers = false) {
  if (story.articles.empty()) throw ValidationError("contextualize on empty story");
  StoryEncoding<S> out;
  std::size_t n_events = 0;
  for (const auto& a : story.articles) {
    out.article_spans.emplace_back(n_events, n_events + a.events.size());
    for (const auto& ev : a.events) {
      out.events.push_back(&ev);
      out.article_of.push_back(out.article_spans.size() - 1);
    }
    n_events += a.events.size();
  }
  if (membership &&
      (membership->rows() != n_events || membership->cols() != 1))
    throw ValidationError("membership length does not match the story's events");
  if (scope == Scope::MultiArticle && !alignment)
    throw ValidationError("multi-article scope requires an alignment");
  if (record_attention) out.received_attention.assign(n_events, 0.0);

  std::vector<Tensor<S>> embeds;
  embeds.reserve(n_events);
  for (const Event* ev : out.events) embeds.push_back(embed_event(*ev, enc));
  Tensor<S> E = stack_rows(embeds);
  if (membership) E = scale_rows(E, *membership);

  std::vector<S> relpos(n_events);
  for (std::size_t i = 0; i < n_events; ++i) relpos[i] = static_cast<S>(out.events[i]->rel_pos);

  if (scope == Scope::SingleArticle) {
    std::vector<Tensor<S>> outs;
    outs.reserve(story.articles.size());
    for (std::size_t a = 0; a < story.articles.size(); ++a) {
      const auto [b, e] = out.article_spans[a];
      if (b == e) throw ValidationError("article without events in contextualize");
      Tensor<S> block = slice_rows(E, b, e);
      std::vector<S> rp(relpos.begin() + static_cast<std::ptrdiff_t>(b),
                        relpos.begin() + static_cast<std::ptrdiff_t>(e));
      Tensor<S> pos = matmul(Tensor<S>::constant(e - b, 1, std::move(rp)), enc.pos_vec);
      Tensor<S> x = add(block, pos);
      std::vector<std::vector<S>> attn;
      Tensor<S> enc_out = tr.forward(x, nullptr, rng, training,
                                     record_attention ? &attn : nullptr, record_all_layers);
      if (record_attention) {
        std::vector<std::size_t> rows(e - b);
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        detail::accumulate_received(attn, e - b, rows, b, out.received_attention);
      }
      outs.push_back(enc_out);
    }
    out.ctx = stack_rows(outs);
    return out;
  }

  // MultiArticle: one sequence with separators between articles.
  std::vector<std::size_t> art_idx(n_events), cat_idx(n_events);
  for (std::size_t i = 0; i < n_events; ++i) {
    art_idx[i] = out.article_of[i];
    auto it = alignment->category.find(out.events[i]->event_id);
    if (it == alignment->category.end())
      throw ValidationError("alignment lacks event \"" + out.events[i]->event_id + "\"");
    cat_idx[i] = detail::frequency_index(it->second);
  }
  Tensor<S> art_rows = gather_rows(enc.article_emb, art_idx);
  Tensor<S> freq_rows = gather_rows(enc.freq_emb, cat_idx);
  Tensor<S> pos_rows = matmul(Tensor<S>::constant(n_events, 1, relpos), enc.pos_vec);
  Tensor<S> X = add(add(E, art_rows), add(freq_rows, pos_rows));

  std::vector<Tensor<S>> parts;
  std::vector<std::size_t> event_rows(n_events);
  std::size_t row = 0;
  for (std::size_t a = 0; a < story.articles.size(); ++a) {
    const auto [b, e] = out.article_spans[a];
    if (b == e) throw ValidationError("article without events in contextualize");
    parts.push_back(slice_rows(X, b, e));
    for (std::size_t i = b; i < e; ++i) event_rows[i] = row++;
    if (a + 1 < story.articles.size()) {
      parts.push_back(add(enc.sep_emb, gather_rows(enc.article_emb, {a})));
      ++row;
    }
  }
  Tensor<S> seq = stack_rows(parts);
  std::vector<std::vector<S>> attn;
  Tensor<S> enc_out = tr.forward(seq, nullptr, rng, training,
                                 record_attention ? &attn : nullptr, record_all_layers);
  if (record_attention)
    detail::accumulate_received(attn, row, event_rows, 0, out.received_attention);
  out.ctx = gather_rows(enc_out, event_rows);
  return out;
}

/// Arithmetic mean of one article's contextual vectors.
template <class S>
Tensor<S> pool_article(const StoryEncoding<S>& se, std::size_t article_idx) {
  if (article_idx >= se.article_spans.size())
    throw ValidationError("pool_article index out of range");
  const auto [b, e] = se.article_spans[article_idx];
  if (b == e) throw ValidationError("pool_article on empty article");
  return mean_rows(slice_rows(se.ctx, b, e));
}

}  // namespace plens
