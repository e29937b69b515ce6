#pragma once

// Per-article model output: an ideology call with its probability plus a
// partisan flag and a selection score for every event. One JSON object per
// article in the predictions file, in corpus order.

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "plens/corpus.hpp"

namespace plens {

struct EventPrediction {
  std::string event_id;
  bool partisan = false;
  double score = 0.0;
};

struct ArticlePrediction {
  std::string article_id;
  Ideology ideology_pred = Ideology::Left;
  double ideology_prob = 0.5;
  std::vector<EventPrediction> events;
};

inline nlohmann::json prediction_to_json(const ArticlePrediction& p) {
  nlohmann::json j;
  j["article_id"] = p.article_id;
  j["ideology_pred"] = ideology_name(p.ideology_pred);
  j["ideology_prob"] = p.ideology_prob;
  nlohmann::json evs = nlohmann::json::array();
  for (const auto& e : p.events)
    evs.push_back({{"event_id", e.event_id}, {"partisan", e.partisan}, {"score", e.score}});
  j["events"] = evs;
  return j;
}

inline void save_predictions(const std::vector<ArticlePrediction>& preds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write predictions: " + path);
  for (const auto& p : preds) out << prediction_to_json(p).dump() << "\n";
  if (!out) throw RuntimeFailure("write failure on predictions: " + path);
}

inline std::vector<ArticlePrediction> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open predictions: " + path);
  std::vector<ArticlePrediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + "bad JSON: " + e.what());
    }
    try {
      ArticlePrediction p;
      p.article_id = j.at("article_id").get<std::string>();
      const auto side = j.at("ideology_pred").get<std::string>();
      if (side != "left" && side != "right")
        throw ValidationError(where + "ideology_pred must be left or right");
      p.ideology_pred = side == "left" ? Ideology::Left : Ideology::Right;
      p.ideology_prob = j.at("ideology_prob").get<double>();
      if (!(p.ideology_prob >= 0.0 && p.ideology_prob <= 1.0))
        throw ValidationError(where + "ideology_prob must lie in [0,1]");
      for (const auto& je : j.at("events")) {
        EventPrediction e;
        e.event_id = je.at("event_id").get<std::string>();
        e.partisan = je.at("partisan").get<bool>();
        e.score = je.at("score").get<double>();
        p.events.push_back(std::move(e));
      }
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + "bad prediction record: " + e.what());
    }
  }
  return out;
}

}  // namespace plens
