// Command-line pipeline: synthetic corpora, alignment stats, prior
// pretraining, model training, event detection, baselines, scoring, the
// removal study, and the k sweep. Every artifact-producing command writes a
// .manifest.json next to its output. Exit codes: 0 success, 1 validation
// error, 2 runtime failure.

#include <cstdlib>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "plens/baselines.hpp"
#include "plens/config.hpp"
#include "plens/eval.hpp"
#include "plens/manifest.hpp"
#include "plens/train.hpp"

namespace {

using namespace plens;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  int threads = 0;
};

struct LexiconOpts {
  std::string base_forms, synonyms, stopwords;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--config", c.config_path, "Config file (key=value with [sections])");
  cmd->add_option("--set", c.sets, "Override a config key: --set section.key=value")
      ->type_name("KEY=VALUE");
  cmd->add_option("--threads", c.threads, "Worker thread cap (flag wins over env)");
}

void add_lexicon(CLI::App* cmd, LexiconOpts& l) {
  cmd->add_option("--base-forms", l.base_forms, "TSV token<TAB>base form");
  cmd->add_option("--synonyms", l.synonyms, "TSV token<TAB>syn1,syn2,...");
  cmd->add_option("--stopwords", l.stopwords, "Stopword list, one per line");
}

Lexicon make_lexicon(const LexiconOpts& l) {
  return load_lexicon(l.base_forms, l.synonyms, l.stopwords);
}

ConfigMap make_config(const CommonOpts& c) {
  ConfigMap cm =
      c.config_path.empty() ? ConfigMap() : ConfigMap::parse_file(c.config_path);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ValidationError("--set expects key=value, got \"" + kv + "\"");
    cm.set_override(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  return cm;
}

void apply_threads(int flag_value) {
  int n = 1;
  if (const char* env = std::getenv("PARTISAN_LENS_THREADS")) {
    try {
      n = std::stoi(env);
    } catch (const std::exception&) {
      throw ValidationError("PARTISAN_LENS_THREADS must be an integer");
    }
  }
  if (flag_value != 0) n = flag_value;  // flag wins over the environment
  if (n < 1) throw ValidationError("thread count must be >= 1");
  worker_threads().store(n);
}

void report_notes(const ConfigMap& cm) {
  for (const auto& n : cm.notes()) std::cerr << "config: " << n << "\n";
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

nlohmann::json synthetic_config_json(const SyntheticConfig& sc) {
  return {{"stories", sc.n_stories},
          {"events_per_article", sc.events_per_article},
          {"partisan_fraction", sc.partisan_fraction},
          {"common_fraction", sc.common_fraction},
          {"marker_strength", sc.marker_strength},
          {"mode", synthetic_mode_name(sc.mode)},
          {"content_vocab", sc.content_vocab},
          {"marker_vocab", sc.marker_vocab},
          {"seed", sc.seed}};
}

nlohmann::json baseline_config_json(const BaselineConfig& bc) {
  return {{"partisan_probability", bc.partisan_probability},
          {"selection_fraction", bc.selection_fraction},
          {"attention_all_layers", bc.attention_all_layers},
          {"seed", bc.seed}};
}

std::map<std::string, AlignmentResult> maybe_align(const Corpus& corpus, const Lexicon& lex,
                                                   const ModelConfig& cfg) {
  if (cfg.scope != Scope::MultiArticle) return {};
  return align_corpus(corpus, lex, cfg.match_threshold);
}

const AlignmentResult* story_alignment(const std::map<std::string, AlignmentResult>& aligns,
                                       const Story& story, const ModelConfig& cfg) {
  if (cfg.scope != Scope::MultiArticle) return nullptr;
  return &aligns.at(story.story_id);
}

// ---------------------------------------------------------------------------

int run_synth(const CommonOpts& common, const std::string& out_path,
              const std::string& annotations_path) {
  ConfigMap cm = make_config(common);
  SyntheticConfig sc = load_synthetic_config(cm);
  consume_all_known(cm);
  cm.check_all_consumed();
  report_notes(cm);
  Corpus corpus = generate_synthetic(sc);
  save_corpus(corpus, out_path);
  const std::string ann =
      annotations_path.empty() ? out_path + ".annotations.jsonl" : annotations_path;
  save_annotations(corpus, ann);
  RunManifest man;
  man.command = "synth";
  man.seed = sc.seed;
  man.config = synthetic_config_json(sc);
  man.add_output(out_path);
  man.add_output(ann);
  write_manifest(man, out_path);
  std::cout << "wrote " << corpus.stories.size() << " stories (" << corpus.event_count()
            << " events) to " << out_path << "\n";
  return 0;
}

int run_align(const CommonOpts& common, const LexiconOpts& lex_opts,
              const std::string& corpus_path, double threshold, const std::string& out_path) {
  ConfigMap cm = make_config(common);
  consume_all_known(cm);
  cm.check_all_consumed();
  report_notes(cm);
  std::vector<std::string> warnings;
  Corpus corpus = load_corpus(corpus_path, std::nullopt, &warnings);
  print_warnings(warnings);
  Lexicon lex = make_lexicon(lex_opts);
  auto aligns = align_corpus(corpus, lex, threshold);

  std::size_t n_events = 0, unique = 0, shared = 0, universal = 0, cross = 0;
  std::size_t left_total = 0, right_total = 0, left_one_sided = 0, right_one_sided = 0;
  for (const auto& story : corpus.stories) {
    const auto& al = aligns.at(story.story_id);
    for (const auto& a : story.articles)
      for (const auto& ev : a.events) {
        ++n_events;
        switch (al.category.at(ev.event_id)) {
          case FrequencyCategory::Unique: ++unique; break;
          case FrequencyCategory::Shared: ++shared; break;
          case FrequencyCategory::Universal: ++universal; break;
        }
        const bool cs = al.cross_side_common.count(ev.event_id) != 0;
        if (cs) ++cross;
        if (a.ideology == Ideology::Left) {
          ++left_total;
          if (!cs) ++left_one_sided;
        } else {
          ++right_total;
          if (!cs) ++right_one_sided;
        }
      }
  }
  auto pct = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
  };
  std::ostringstream os;
  os << "stories " << corpus.stories.size() << "\n";
  os << "events " << n_events << "\n";
  os << "unique " << unique << " (" << detail::fixed6(pct(unique, n_events)) << "%)\n";
  os << "shared " << shared << " (" << detail::fixed6(pct(shared, n_events)) << "%)\n";
  os << "universal " << universal << " (" << detail::fixed6(pct(universal, n_events)) << "%)\n";
  os << "cross_side_common " << cross << " (" << detail::fixed6(pct(cross, n_events)) << "%)\n";
  os << "one_sided_left " << left_one_sided << " ("
     << detail::fixed6(pct(left_one_sided, left_total)) << "% of left events)\n";
  os << "one_sided_right " << right_one_sided << " ("
     << detail::fixed6(pct(right_one_sided, right_total)) << "% of right events)\n";
  std::cout << os.str();
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw RuntimeFailure("cannot write report: " + out_path);
    out << os.str();
    out.close();
    RunManifest man;
    man.command = "align";
    man.config = {{"threshold", threshold}};
    man.add_input(corpus_path);
    man.add_output(out_path);
    write_manifest(man, out_path);
  }
  return 0;
}

int run_pretrain_prior(const CommonOpts& common, const std::string& corpus_path,
                       const std::string& out_path, std::uint64_t seed) {
  ConfigMap cm = make_config(common);
  ModelConfig mc = load_model_config(cm);
  consume_all_known(cm);
  cm.check_all_consumed();
  report_notes(cm);
  std::vector<std::string> warnings;
  Corpus corpus = load_corpus(corpus_path, std::nullopt, &warnings);
  print_warnings(warnings);
  EventPriorModel<float> prior(mc.embedder_dims(), mc.encoder.dropout, seed);
  auto log = pretrain_event_prior(prior, corpus, mc.prior_epochs, mc.prior_batch_size, mc.optim,
                                  seed);
  save_prior(prior, out_path, log);
  RunManifest man;
  man.command = "pretrain-prior";
  man.seed = seed;
  man.config = model_config_to_json(mc);
  man.add_input(corpus_path);
  man.add_output(out_path);
  write_manifest(man, out_path);
  for (const auto& line : log) std::cout << line << "\n";
  return 0;
}

int run_train(const CommonOpts& common, const LexiconOpts& lex_opts,
              const std::string& corpus_path, const std::string& dev_path,
              double dev_fraction, const std::string& prior_path, const std::string& out_path,
              const std::string& log_path, std::uint64_t seed) {
  ConfigMap cm = make_config(common);
  ModelConfig mc = load_model_config(cm);
  consume_all_known(cm);
  cm.check_all_consumed();
  report_notes(cm);
  std::vector<std::string> warnings;
  Corpus corpus = load_corpus(corpus_path, std::nullopt, &warnings);
  print_warnings(warnings);
  Lexicon lex = make_lexicon(lex_opts);

  Corpus train_part, dev_part;
  if (!dev_path.empty()) {
    train_part = std::move(corpus);
    std::vector<std::string> dev_warnings;
    dev_part = load_corpus(dev_path, std::nullopt, &dev_warnings);
    print_warnings(dev_warnings);
  } else {
    if (!(dev_fraction > 0.0 && dev_fraction < 1.0))
      throw ValidationError("--dev-fraction must lie in (0,1)");
    auto parts = split_corpus(corpus, {1.0 - dev_fraction, dev_fraction, 0.0}, seed);
    train_part = std::move(parts[0]);
    dev_part = std::move(parts[1]);
  }

  Model<float> model = build_model<float>(mc, seed);
  if (mc.use_prior_init) {
    if (prior_path.empty())
      throw ValidationError("model.use_prior_init requires --prior <checkpoint>");
    EventPriorModel<float> prior = load_prior(prior_path);
    apply_prior_init(model, prior);
  }
  TrainResult res = train_model(model, train_part, dev_part, lex, seed);
  save_model(model, out_path, res.log_lines);

  const std::string log_file = log_path.empty() ? out_path + ".log.jsonl" : log_path;
  {
    std::ofstream out(log_file);
    if (!out) throw RuntimeFailure("cannot write training log: " + log_file);
    for (const auto& line : res.log_lines) out << line << "\n";
  }
  RunManifest man;
  man.command = "train";
  man.seed = seed;
  man.config = model_config_to_json(mc);
  man.add_input(corpus_path);
  if (!dev_path.empty()) man.add_input(dev_path);
  if (!prior_path.empty()) man.add_input(prior_path);
  man.add_output(out_path);
  man.add_output(log_file);
  write_manifest(man, out_path);
  std::cout << "best dev macro_f1 " << detail::fixed6(res.best_dev_macro_f1) << " at epoch "
            << res.best_epoch << "; checkpoint " << out_path << "\n";
  return 0;
}

int run_detect(const CommonOpts& common, const LexiconOpts& lex_opts,
               const std::string& model_path, const std::string& corpus_path,
               const std::string& out_path) {
  ConfigMap cm = make_config(common);
  consume_all_known(cm);
  cm.check_all_consumed();
  report_notes(cm);
  Model<float> model = load_model(model_path);
  std::vector<std::string> warnings;
  Corpus corpus = load_corpus(corpus_path, std::nullopt, &warnings);
  print_warnings(warnings);
  Lexicon lex = make_lexicon(lex_opts);
  auto aligns = maybe_align(corpus, lex, model.cfg);
  std::vector<ArticlePrediction> preds;
  for (const auto& story : corpus.stories) {
    auto sp = predict_story(model, story, story_alignment(aligns, story, model.cfg));
    preds.insert(preds.end(), sp.begin(), sp.end());
  }
  save_predictions(preds, out_path);
  RunManifest man;
  man.command = "detect";
  man.config = model_config_to_json(model.cfg);
  man.add_input(model_path);
  man.add_input(corpus_path);
  man.add_output(out_path);
  write_manifest(man, out_path);
  std::cout << "wrote predictions for " << preds.size() << " articles to " << out_path << "\n";
  return 0;
}

int run_baseline(const CommonOpts& common, const LexiconOpts& lex_opts,
                 const std::string& method, const std::string& corpus_path,
                 const std::string& model_path, const std::string& prior_path,
                 const std::string& out_path) {
  ConfigMap cm = make_config(common);
  BaselineConfig bc = load_baseline_config(cm);
  consume_all_known(cm);
  cm.check_all_consumed();
  report_notes(cm);
  std::vector<std::string> warnings;
  Corpus corpus = load_corpus(corpus_path, std::nullopt, &warnings);
  print_warnings(warnings);

  std::vector<ArticlePrediction> preds;
  RunManifest man;
  man.command = "baseline";
  man.seed = bc.seed;
  man.config = baseline_config_json(bc);
  man.config["method"] = method;
  man.add_input(corpus_path);

  if (method == "random") {
    Rng rng(bc.seed);
    for (const auto& story : corpus.stories) {
      auto sp = baseline_random(story, bc, rng);
      preds.insert(preds.end(), sp.begin(), sp.end());
    }
  } else if (method == "event_prior") {
    if (prior_path.empty()) throw ValidationError("baseline event_prior requires --prior");
    EventPriorModel<float> prior = load_prior(prior_path);
    man.add_input(prior_path);
    for (const auto& story : corpus.stories) {
      auto sp = baseline_event_prior(story, prior, bc);
      preds.insert(preds.end(), sp.begin(), sp.end());
    }
  } else if (method == "attention" || method == "perturbation") {
    if (model_path.empty())
      throw ValidationError("baseline " + method + " requires --model");
    Model<float> model = load_model(model_path);
    man.add_input(model_path);
    Lexicon lex = make_lexicon(lex_opts);
    auto aligns = maybe_align(corpus, lex, model.cfg);
    for (const auto& story : corpus.stories) {
      const AlignmentResult* al = story_alignment(aligns, story, model.cfg);
      auto sp = method == "attention" ? baseline_attention(model, story, al, bc)
                                      : baseline_perturbation(model, story, al, bc);
      preds.insert(preds.end(), sp.begin(), sp.end());
    }
  } else {
    throw ValidationError("unknown baseline method: " + method +
                          " (expected random, event_prior, attention, or perturbation)");
  }
  save_predictions(preds, out_path);
  man.add_output(out_path);
  write_manifest(man, out_path);
  std::cout << "wrote " << method << " baseline predictions for " << preds.size()
            << " articles to " << out_path << "\n";
  return 0;
}

int run_eval(const std::string& pred_path, const std::string& gold_path,
             const std::string& annotations_path, const std::string& out_path) {
  std::vector<std::string> warnings;
  Corpus corpus = load_corpus(
      gold_path,
      annotations_path.empty() ? std::nullopt : std::optional<std::string>(annotations_path),
      &warnings);
  print_warnings(warnings);
  auto preds = load_predictions(pred_path);
  PredictionEval ev = evaluate_predictions(corpus, preds);
  print_warnings(ev.warnings);
  std::ostringstream os;
  os << "macro_f1 " << detail::fixed6(ev.macro_f1) << "\n";
  os << "partisan_f1 " << detail::fixed6(ev.partisan_f1) << "\n";
  os << "articles " << ev.n_articles << "\n";
  os << "events " << ev.n_events << "\n";
  std::cout << os.str();
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw RuntimeFailure("cannot write report: " + out_path);
    out << os.str();
    out.close();
    RunManifest man;
    man.command = "eval";
    man.add_input(pred_path);
    man.add_input(gold_path);
    if (!annotations_path.empty()) man.add_input(annotations_path);
    man.add_output(out_path);
    write_manifest(man, out_path);
  }
  return 0;
}

int run_ablate_removal(const CommonOpts& common, const LexiconOpts& lex_opts,
                       const std::string& model_path, const std::string& corpus_path,
                       const std::string& annotations_path, const std::string& out_path) {
  ConfigMap cm = make_config(common);
  RemovalStudyConfig rc = load_removal_config(cm);
  consume_all_known(cm);
  cm.check_all_consumed();
  report_notes(cm);
  if (annotations_path.empty())
    throw ValidationError("ablate-removal requires --annotations with gold partisan labels");
  Model<float> model = load_model(model_path);
  std::vector<std::string> warnings;
  Corpus corpus = load_corpus(corpus_path, annotations_path, &warnings);
  print_warnings(warnings);
  Lexicon lex = make_lexicon(lex_opts);
  auto rows = removal_study(model, corpus, lex, rc);
  std::cout << removal_report(rows, /*csv=*/false);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw RuntimeFailure("cannot write report: " + out_path);
    out << removal_report(rows, /*csv=*/true);
    out.close();
    RunManifest man;
    man.command = "ablate-removal";
    man.seed = rc.seed;
    man.config = {{"fractions", rc.fractions},
                  {"runs", rc.runs},
                  {"seed", rc.seed},
                  {"exclude_gold_from_random_pool", rc.exclude_gold_from_random_pool}};
    man.add_input(model_path);
    man.add_input(corpus_path);
    man.add_input(annotations_path);
    man.add_output(out_path);
    write_manifest(man, out_path);
  }
  return 0;
}

int run_sweep_k(const CommonOpts& common, const LexiconOpts& lex_opts,
                const std::string& corpus_path, const std::string& annotations_path,
                std::vector<int> k_list, std::vector<std::uint64_t> seeds,
                const std::string& out_path) {
  ConfigMap cm = make_config(common);
  ModelConfig mc = load_model_config(cm);
  consume_all_known(cm);
  cm.check_all_consumed();
  report_notes(cm);
  if (annotations_path.empty())
    throw ValidationError("sweep-k requires --annotations with gold partisan labels");
  std::vector<std::string> warnings;
  Corpus corpus = load_corpus(corpus_path, annotations_path, &warnings);
  print_warnings(warnings);
  Lexicon lex = make_lexicon(lex_opts);
  if (k_list.empty()) k_list = {10, 20, 30, 40, 50};
  if (seeds.empty()) seeds = {1, 2, 3};
  auto rows = k_sweep(corpus, mc, k_list, seeds, lex);
  std::cout << sweep_report(rows, /*csv=*/false);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw RuntimeFailure("cannot write report: " + out_path);
    out << sweep_report(rows, /*csv=*/true);
    out.close();
    RunManifest man;
    man.command = "sweep-k";
    man.config = model_config_to_json(mc);
    man.config["k_list"] = k_list;
    man.config["seeds"] = seeds;
    man.add_input(corpus_path);
    man.add_input(annotations_path);
    man.add_output(out_path);
    write_manifest(man, out_path);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"partisan_lens: event-level partisanship detection in multi-article news stories"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Print help for every subcommand");

  CommonOpts common;
  LexiconOpts lex_opts;

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic story corpus");
  CommonOpts synth_common;
  std::string synth_out, synth_ann;
  add_common(synth, synth_common);
  std::string synth_stories, synth_events, synth_mode, synth_strength, synth_seed;
  synth->add_option("--stories", synth_stories, "Story count (overrides synth.stories)");
  synth->add_option("--events", synth_events, "Mean events per article");
  synth->add_option("--mode", synth_mode, "lexical or comparative");
  synth->add_option("--strength", synth_strength, "Marker strength in [0,1]");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--out", synth_out, "Output corpus JSONL")->required();
  synth->add_option("--annotations", synth_ann,
                    "Gold annotations path (default <out>.annotations.jsonl)");

  // align
  auto* align = app.add_subcommand("align", "Report alignment and frequency statistics");
  CommonOpts align_common;
  LexiconOpts align_lex;
  std::string align_corpus_path, align_out;
  double align_threshold = 0.4;
  add_common(align, align_common);
  add_lexicon(align, align_lex);
  align->add_option("--corpus", align_corpus_path, "Corpus JSONL")->required();
  align->add_option("--threshold", align_threshold, "Match threshold in (0,1]");
  align->add_option("--out", align_out, "Write the report here as well");

  // pretrain-prior
  auto* prior_cmd = app.add_subcommand("pretrain-prior", "Train the event-ideology prior");
  CommonOpts prior_common;
  std::string prior_corpus, prior_out;
  std::uint64_t prior_seed = 0;
  add_common(prior_cmd, prior_common);
  prior_cmd->add_option("--corpus", prior_corpus, "Training corpus JSONL")->required();
  prior_cmd->add_option("--out", prior_out, "Output prior checkpoint")->required();
  prior_cmd->add_option("--seed", prior_seed, "Training seed");

  // train
  auto* train = app.add_subcommand("train", "Train a model");
  CommonOpts train_common;
  LexiconOpts train_lex;
  std::string train_corpus, train_dev, train_prior, train_out, train_log;
  double train_dev_fraction = 0.1;
  std::uint64_t train_seed = 0;
  add_common(train, train_common);
  add_lexicon(train, train_lex);
  train->add_option("--corpus", train_corpus, "Training corpus JSONL")->required();
  train->add_option("--dev", train_dev, "Dev corpus JSONL (default: split from --corpus)");
  train->add_option("--dev-fraction", train_dev_fraction,
                    "Dev share when splitting (default 0.1)");
  train->add_option("--prior", train_prior, "Prior checkpoint for embedder init");
  train->add_option("--out", train_out, "Output model checkpoint")->required();
  train->add_option("--log", train_log, "Training log path (default <out>.log.jsonl)");
  train->add_option("--seed", train_seed, "Training seed");

  // detect
  auto* detect = app.add_subcommand("detect", "Flag partisan events and predict ideology");
  CommonOpts detect_common;
  LexiconOpts detect_lex;
  std::string detect_model, detect_corpus, detect_out;
  add_common(detect, detect_common);
  add_lexicon(detect, detect_lex);
  detect->add_option("--model", detect_model, "Model checkpoint")->required();
  detect->add_option("--corpus", detect_corpus, "Corpus JSONL")->required();
  detect->add_option("--out", detect_out, "Output predictions JSONL")->required();

  // baseline
  auto* baseline = app.add_subcommand("baseline", "Run a comparison system");
  CommonOpts baseline_common;
  LexiconOpts baseline_lex;
  std::string baseline_method, baseline_corpus, baseline_model, baseline_prior, baseline_out;
  add_common(baseline, baseline_common);
  add_lexicon(baseline, baseline_lex);
  baseline->add_option("--method", baseline_method,
                       "random, event_prior, attention, or perturbation")
      ->required();
  baseline->add_option("--corpus", baseline_corpus, "Corpus JSONL")->required();
  baseline->add_option("--model", baseline_model, "Model checkpoint (attention, perturbation)");
  baseline->add_option("--prior", baseline_prior, "Prior checkpoint (event_prior)");
  baseline->add_option("--out", baseline_out, "Output predictions JSONL")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against gold labels");
  std::string eval_pred, eval_gold, eval_ann, eval_out;
  eval_cmd->add_option("--pred", eval_pred, "Predictions JSONL")->required();
  eval_cmd->add_option("--gold", eval_gold, "Gold corpus JSONL")->required();
  eval_cmd->add_option("--annotations", eval_ann, "Gold partisan annotations JSONL");
  eval_cmd->add_option("--out", eval_out, "Write the report here as well");

  // ablate-removal
  auto* ablate = app.add_subcommand("ablate-removal", "Partisan-event removal study");
  CommonOpts ablate_common;
  LexiconOpts ablate_lex;
  std::string ablate_model, ablate_corpus, ablate_ann, ablate_out;
  std::vector<int> ablate_m;
  int ablate_runs = -1;
  std::uint64_t ablate_seed = 0;
  bool ablate_seed_set = false, ablate_runs_set = false;
  add_common(ablate, ablate_common);
  add_lexicon(ablate, ablate_lex);
  ablate->add_option("--model", ablate_model, "Model checkpoint")->required();
  ablate->add_option("--corpus", ablate_corpus, "Corpus JSONL")->required();
  ablate->add_option("--annotations", ablate_ann, "Gold partisan annotations JSONL")->required();
  ablate->add_option("--m", ablate_m, "Removal fractions in percent")->delimiter(',');
  ablate->add_option("--runs", ablate_runs, "Runs per fraction")
      ->check(CLI::PositiveNumber)
      ->each([&](const std::string&) { ablate_runs_set = true; });
  ablate->add_option("--seed", ablate_seed, "Removal seed")->each([&](const std::string&) {
    ablate_seed_set = true;
  });
  ablate->add_option("--out", ablate_out, "Write the CSV report here as well");

  // sweep-k
  auto* sweep = app.add_subcommand("sweep-k", "Train and score across k values");
  CommonOpts sweep_common;
  LexiconOpts sweep_lex;
  std::string sweep_corpus, sweep_ann, sweep_out;
  std::vector<int> sweep_ks;
  std::vector<std::uint64_t> sweep_seeds;
  add_common(sweep, sweep_common);
  add_lexicon(sweep, sweep_lex);
  sweep->add_option("--corpus", sweep_corpus, "Corpus JSONL")->required();
  sweep->add_option("--annotations", sweep_ann, "Gold partisan annotations JSONL")->required();
  sweep->add_option("--k", sweep_ks, "k values (default 10,20,30,40,50)")->delimiter(',');
  sweep->add_option("--seeds", sweep_seeds, "Training seeds (default 1,2,3)")->delimiter(',');
  sweep->add_option("--out", sweep_out, "Write the CSV report here as well");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // bad flags are validation errors
  }

  try {
    if (*synth) {
      apply_threads(synth_common.threads);
      if (!synth_stories.empty()) synth_common.sets.push_back("synth.stories=" + synth_stories);
      if (!synth_events.empty())
        synth_common.sets.push_back("synth.events_per_article=" + synth_events);
      if (!synth_mode.empty()) synth_common.sets.push_back("synth.mode=" + synth_mode);
      if (!synth_strength.empty())
        synth_common.sets.push_back("synth.marker_strength=" + synth_strength);
      if (!synth_seed.empty()) synth_common.sets.push_back("synth.seed=" + synth_seed);
      return run_synth(synth_common, synth_out, synth_ann);
    }
    if (*align) {
      apply_threads(align_common.threads);
      return run_align(align_common, align_lex, align_corpus_path, align_threshold, align_out);
    }
    if (*prior_cmd) {
      apply_threads(prior_common.threads);
      return run_pretrain_prior(prior_common, prior_corpus, prior_out, prior_seed);
    }
    if (*train) {
      apply_threads(train_common.threads);
      return run_train(train_common, train_lex, train_corpus, train_dev, train_dev_fraction,
                       train_prior, train_out, train_log, train_seed);
    }
    if (*detect) {
      apply_threads(detect_common.threads);
      return run_detect(detect_common, detect_lex, detect_model, detect_corpus, detect_out);
    }
    if (*baseline) {
      apply_threads(baseline_common.threads);
      return run_baseline(baseline_common, baseline_lex, baseline_method, baseline_corpus,
                          baseline_model, baseline_prior, baseline_out);
    }
    if (*eval_cmd) {
      return run_eval(eval_pred, eval_gold, eval_ann, eval_out);
    }
    if (*ablate) {
      apply_threads(ablate_common.threads);
      if (!ablate_m.empty()) {
        std::string joined;
        for (std::size_t i = 0; i < ablate_m.size(); ++i)
          joined += (i ? "," : "") + std::to_string(ablate_m[i]);
        ablate_common.sets.push_back("removal.fractions=" + joined);
      }
      if (ablate_runs_set)
        ablate_common.sets.push_back("removal.runs=" + std::to_string(ablate_runs));
      if (ablate_seed_set)
        ablate_common.sets.push_back("removal.seed=" + std::to_string(ablate_seed));
      return run_ablate_removal(ablate_common, ablate_lex, ablate_model, ablate_corpus,
                                ablate_ann, ablate_out);
    }
    if (*sweep) {
      apply_threads(sweep_common.threads);
      return run_sweep_k(sweep_common, sweep_lex, sweep_corpus, sweep_ann, sweep_ks, sweep_seeds,
                         sweep_out);
    }
  } catch (const plens::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
