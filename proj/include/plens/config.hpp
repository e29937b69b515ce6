#pragma once

// Config files: flat key=value lines grouped by [section], '#' or ';' comment
// lines, keys addressed as "section.key". Flag overrides sit on top of the
// file; when both define a key the flag wins and the conflict is logged.
// Every key, from the file or from --set, must be consumed by some loader,
// so typos fail loudly instead of silently using defaults.

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "plens/baselines.hpp"
#include "plens/eval.hpp"
#include "plens/model.hpp"
#include "plens/synthetic.hpp"

namespace plens {

class ConfigMap {
 public:
  ConfigMap() = default;

  static ConfigMap parse_text(const std::string& text, const std::string& origin) {
    ConfigMap cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string where = origin + ":" + std::to_string(lineno) + ": ";
      std::string t = trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      if (t.front() == '[') {
        if (t.back() != ']') throw ValidationError(where + "unterminated section header");
        section = trim(t.substr(1, t.size() - 2));
        if (section.empty()) throw ValidationError(where + "empty section name");
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw ValidationError(where + "expected key=value");
      std::string key = trim(t.substr(0, eq));
      std::string value = trim(t.substr(eq + 1));
      if (key.empty()) throw ValidationError(where + "empty key");
      if (!section.empty()) key = section + "." + key;
      if (cfg.file_.count(key)) throw ValidationError(where + "duplicate key " + key);
      cfg.file_[key] = value;
    }
    return cfg;
  }

  static ConfigMap parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str(), path);
  }

  /// Flag override; wins over the file value (logged in notes()).
  void set_override(const std::string& key, const std::string& value) { over_[key] = value; }

  bool has(const std::string& key) const { return over_.count(key) || file_.count(key); }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    return lookup(key, fallback);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const std::string v = lookup(key, fallback ? "true" : "false");
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("config key " + key + " expects a boolean, got \"" + v + "\"");
  }

  double get_double(const std::string& key, double fallback) const {
    const std::string v = lookup(key, "");
    if (v.empty() && !has(key)) return fallback;
    return parse_double(key, v);
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    const std::string v = lookup(key, "");
    if (v.empty() && !has(key)) return fallback;
    return parse_int(key, v);
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    const std::int64_t v = get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ValidationError("config key " + key + " must be non-negative");
    return static_cast<std::uint64_t>(v);
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    return static_cast<std::size_t>(get_u64(key, fallback));
  }

  std::vector<std::int64_t> get_int_list(const std::string& key,
                                         std::vector<std::int64_t> fallback) const {
    const std::string v = lookup(key, "");
    if (v.empty() && !has(key)) return fallback;
    std::vector<std::int64_t> out;
    for (const auto& piece : split(v, ',')) {
      const std::string p = trim(piece);
      if (p.empty()) throw ValidationError("config key " + key + " has an empty list entry");
      out.push_back(parse_int(key, p));
    }
    return out;
  }

  /// Fails when the file or the override set holds keys no reader asked for.
  void check_all_consumed() const {
    std::vector<std::string> unknown;
    for (const auto& [k, v] : file_)
      if (!consumed_.count(k)) unknown.push_back(k);
    for (const auto& [k, v] : over_)
      if (!consumed_.count(k) && !file_.count(k)) unknown.push_back(k + " (--set)");
    if (!unknown.empty()) {
      std::string msg = "unknown config keys in " + origin_ + ":";
      for (const auto& k : unknown) msg += " " + k;
      throw ValidationError(msg);
    }
  }

  /// Conflict log: one line per key where a flag override replaced a file value.
  const std::vector<std::string>& notes() const { return notes_; }

 private:
  std::string lookup(const std::string& key, const std::string& fallback) const {
    auto fit = file_.find(key);
    if (fit != file_.end()) consumed_.insert(key);
    auto oit = over_.find(key);
    if (oit != over_.end()) {
      consumed_.insert(key);
      if (fit != file_.end() && fit->second != oit->second)
        note_once(key + ": flag value \"" + oit->second + "\" overrides config value \"" +
                  fit->second + "\"");
      return oit->second;
    }
    return fit != file_.end() ? fit->second : fallback;
  }

  void note_once(const std::string& line) const {
    if (noted_.insert(line).second) notes_.push_back(line);
  }

  static double parse_double(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ValidationError("config key " + key + " expects a number, got \"" + v + "\"");
    }
  }

  static std::int64_t parse_int(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const std::int64_t i = std::stoll(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return i;
    } catch (const std::exception&) {
      throw ValidationError("config key " + key + " expects an integer, got \"" + v + "\"");
    }
  }

  std::string origin_ = "<config>";
  std::map<std::string, std::string> file_;
  std::map<std::string, std::string> over_;
  mutable std::set<std::string> consumed_;
  mutable std::vector<std::string> notes_;
  mutable std::set<std::string> noted_;
};

// ---------------------------------------------------------------------------
// Per-module loaders. Defaults are the struct defaults; every recognized key
// is listed here and nowhere else.

inline ModelConfig load_model_config(const ConfigMap& cfg) {
  ModelConfig mc;
  mc.scope = parse_scope(cfg.get_string("model.scope", scope_name(mc.scope)));
  mc.family = parse_family(cfg.get_string("model.family", family_name(mc.family)));
  mc.vocab = cfg.get_size("model.vocab", mc.vocab);
  mc.d_tok = cfg.get_size("model.d_tok", mc.d_tok);
  mc.restriction_weight = cfg.get_double("model.restriction_weight", mc.restriction_weight);
  mc.match_threshold = cfg.get_double("model.match_threshold", mc.match_threshold);
  mc.use_prior_init = cfg.get_bool("model.use_prior_init", mc.use_prior_init);
  mc.k_per_story = cfg.get_bool("model.k_per_story", mc.k_per_story);
  mc.shuffle_articles = cfg.get_bool("model.shuffle_articles", mc.shuffle_articles);
  mc.epochs = cfg.get_size("model.epochs", mc.epochs);
  mc.batch_size = cfg.get_size("model.batch_size", mc.batch_size);
  mc.prior_epochs = cfg.get_size("model.prior_epochs", mc.prior_epochs);
  mc.prior_batch_size = cfg.get_size("model.prior_batch_size", mc.prior_batch_size);
  mc.encoder.layers = cfg.get_size("encoder.layers", mc.encoder.layers);
  mc.encoder.heads = cfg.get_size("encoder.heads", mc.encoder.heads);
  mc.encoder.dim = cfg.get_size("encoder.dim", mc.encoder.dim);
  mc.encoder.ffn = cfg.get_size("encoder.ffn", mc.encoder.ffn);
  mc.encoder.dropout = cfg.get_double("encoder.dropout", mc.encoder.dropout);
  mc.sampling.k_percent = static_cast<int>(cfg.get_int("sampling.k_percent",
                                                       mc.sampling.k_percent));
  mc.sampling.temperature = cfg.get_double("sampling.temperature", mc.sampling.temperature);
  mc.sampling.straight_through =
      cfg.get_bool("sampling.straight_through", mc.sampling.straight_through);
  mc.optim.lr = cfg.get_double("optim.lr", mc.optim.lr);
  mc.optim.weight_decay = cfg.get_double("optim.weight_decay", mc.optim.weight_decay);
  mc.optim.warmup_fraction = cfg.get_double("optim.warmup_fraction", mc.optim.warmup_fraction);
  mc.optim.beta1 = cfg.get_double("optim.beta1", mc.optim.beta1);
  mc.optim.beta2 = cfg.get_double("optim.beta2", mc.optim.beta2);
  mc.optim.eps = cfg.get_double("optim.eps", mc.optim.eps);
  validate_model_config(mc);
  return mc;
}

inline SyntheticConfig load_synthetic_config(const ConfigMap& cfg) {
  SyntheticConfig sc;
  sc.n_stories = static_cast<int>(cfg.get_int("synth.stories", sc.n_stories));
  sc.events_per_article =
      static_cast<int>(cfg.get_int("synth.events_per_article", sc.events_per_article));
  sc.partisan_fraction = cfg.get_double("synth.partisan_fraction", sc.partisan_fraction);
  sc.common_fraction = cfg.get_double("synth.common_fraction", sc.common_fraction);
  sc.marker_strength = cfg.get_double("synth.marker_strength", sc.marker_strength);
  sc.common_paraphrase = cfg.get_double("synth.common_paraphrase", sc.common_paraphrase);
  sc.common_marker = cfg.get_double("synth.common_marker", sc.common_marker);
  const std::string mode = cfg.get_string("synth.mode", synthetic_mode_name(sc.mode));
  sc.mode = parse_synthetic_mode(mode);
  sc.content_vocab = static_cast<int>(cfg.get_int("synth.content_vocab", sc.content_vocab));
  sc.marker_vocab = static_cast<int>(cfg.get_int("synth.marker_vocab", sc.marker_vocab));
  sc.seed = cfg.get_u64("synth.seed", sc.seed);
  validate_synthetic_config(sc);
  return sc;
}

inline BaselineConfig load_baseline_config(const ConfigMap& cfg) {
  BaselineConfig bc;
  bc.partisan_probability = cfg.get_double("baseline.partisan_probability",
                                           bc.partisan_probability);
  bc.selection_fraction = cfg.get_double("baseline.selection_fraction", bc.selection_fraction);
  bc.attention_all_layers = cfg.get_bool("baseline.attention_all_layers",
                                         bc.attention_all_layers);
  bc.seed = cfg.get_u64("baseline.seed", bc.seed);
  validate_baseline_config(bc);
  return bc;
}

inline RemovalStudyConfig load_removal_config(const ConfigMap& cfg) {
  RemovalStudyConfig rc;
  std::vector<std::int64_t> def(rc.fractions.begin(), rc.fractions.end());
  const auto fr = cfg.get_int_list("removal.fractions", def);
  rc.fractions.assign(fr.begin(), fr.end());
  rc.runs = cfg.get_size("removal.runs", rc.runs);
  rc.seed = cfg.get_u64("removal.seed", rc.seed);
  rc.exclude_gold_from_random_pool =
      cfg.get_bool("removal.exclude_gold_from_random_pool", rc.exclude_gold_from_random_pool);
  validate_removal_config(rc);
  return rc;
}

/// Runs every loader for its side effects: marks each recognized key
/// consumed and value-checks it. Lets one config file serve the whole
/// pipeline; check_all_consumed then rejects only keys no module knows.
inline void consume_all_known(const ConfigMap& cfg) {
  load_model_config(cfg);
  load_synthetic_config(cfg);
  load_baseline_config(cfg);
  load_removal_config(cfg);
}

}  // namespace plens
