#pragma once

// Shared fixtures for the test suites: hand-built stories, tiny model
// configs, a finite-difference gradient harness, and temp-file helpers.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "plens/corpus.hpp"
#include "plens/model.hpp"

namespace tu {

inline plens::Event make_event(std::string id, std::vector<std::string> arg0,
                               std::vector<std::string> pred, std::vector<std::string> arg1,
                               int sent_idx = 0, double rel_pos = 0.0) {
  plens::Event ev;
  ev.event_id = std::move(id);
  ev.predicate = std::move(pred);
  if (!arg0.empty()) ev.arg0 = std::move(arg0);
  if (!arg1.empty()) ev.arg1 = std::move(arg1);
  ev.sent_idx = sent_idx;
  ev.rel_pos = rel_pos;
  return ev;
}

inline plens::Article make_article(std::string id, plens::Ideology side,
                                   std::vector<plens::Event> events) {
  plens::Article a;
  a.article_id = std::move(id);
  a.ideology = side;
  for (std::size_t i = 0; i < events.size(); ++i) {
    events[i].sent_idx = static_cast<int>(i);
    events[i].rel_pos =
        events.size() > 1 ? static_cast<double>(i) / static_cast<double>(events.size() - 1) : 0.0;
  }
  a.events = std::move(events);
  return a;
}

inline plens::Story make_story(std::string id, std::vector<plens::Article> articles) {
  plens::Story s;
  s.story_id = std::move(id);
  s.articles = std::move(articles);
  return s;
}

/// Two-story corpus with known structure: story s1 has a cross-side shared
/// event (e1 ~ e3) plus one unique event per article.
inline plens::Corpus tiny_corpus() {
  plens::Corpus c;
  c.stories.push_back(make_story(
      "s1", {make_article("s1_a0", plens::Ideology::Left,
                          {make_event("e1", {"senate"}, {"passed"}, {"the", "bill"}),
                           make_event("e2", {"group"}, {"praised"}, {"the", "vote"})}),
             make_article("s1_a1", plens::Ideology::Right,
                          {make_event("e3", {"senate"}, {"passed"}, {"bill"}),
                           make_event("e4", {"critics"}, {"warned"}, {"of", "costs"})})}));
  c.stories.push_back(make_story(
      "s2", {make_article("s2_a0", plens::Ideology::Right,
                          {make_event("e5", {"court"}, {"blocked"}, {"the", "order"}),
                           make_event("e6", {"judge"}, {"cited"}, {"precedent"})})}));
  return c;
}

/// Small but structurally complete model config (fast to train).
inline plens::ModelConfig tiny_config(plens::Scope scope, plens::ModelFamily family) {
  plens::ModelConfig mc;
  mc.scope = scope;
  mc.family = family;
  mc.vocab = 101;
  mc.d_tok = 8;
  mc.encoder.dim = 16;
  mc.encoder.heads = 2;
  mc.encoder.layers = 1;
  mc.encoder.ffn = 32;
  mc.encoder.dropout = 0.0;
  mc.sampling.k_percent = 50;
  mc.sampling.temperature = 0.5;
  mc.epochs = 2;
  mc.batch_size = 4;
  mc.optim.lr = 1e-3;
  return mc;
}

/// Scratch path that is removed when the object dies.
struct TempFile {
  std::string path;
  explicit TempFile(const std::string& stem) {
    path = (std::filesystem::temp_directory_path() /
            (stem + "." + std::to_string(::getpid()) + ".tmp"))
               .string();
  }
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path, ec);
    std::filesystem::remove(path + ".manifest.json", ec);
  }
};

/// Max relative error between analytic gradients and central differences.
/// `build` must rebuild the same scalar graph from the store's current
/// values (fresh Rng inside so stochastic layers repeat exactly).
inline double fd_gradcheck(plens::ParameterStore<double>& ps,
                           const std::function<plens::Tensor<double>()>& build,
                           double h = 1e-5) {
  ps.zero_grad();
  plens::Tensor<double> loss = build();
  if (loss.rows() != 1 || loss.cols() != 1)
    throw std::logic_error("fd_gradcheck needs a scalar loss");
  plens::backward(loss);
  std::map<std::string, std::vector<double>> analytic;
  for (auto& [name, e] : ps.entries()) analytic[name] = e.t.grad();

  double max_rel = 0.0;
  for (auto& [name, e] : ps.entries()) {
    auto& vals = e.t.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      e.t.bump_version();
      const double fp = build().values()[0];
      vals[i] = orig - h;
      e.t.bump_version();
      const double fm = build().values()[0];
      vals[i] = orig;
      e.t.bump_version();
      const double fd = (fp - fm) / (2.0 * h);
      const double an = analytic[name].empty() ? 0.0 : analytic[name][i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      max_rel = std::max(max_rel, std::abs(fd - an) / denom);
    }
  }
  return max_rel;
}

}  // namespace tu
