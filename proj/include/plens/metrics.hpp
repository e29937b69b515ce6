#pragma once

// Article- and event-level metrics. Conventions: 0/0 precision or recall is
// 0; a class absent from both predictions and gold contributes F1 = 0 to the
// macro average; partisan F1 with no gold positives is 0 (flagged via the
// optional warning output).

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "plens/common.hpp"
#include "plens/corpus.hpp"

namespace plens {

struct BinaryCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

inline double f1_from_counts(const BinaryCounts& c) {
  const double p = (c.tp + c.fp) == 0 ? 0.0 : static_cast<double>(c.tp) / (c.tp + c.fp);
  const double r = (c.tp + c.fn) == 0 ? 0.0 : static_cast<double>(c.tp) / (c.tp + c.fn);
  return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

/// Unweighted mean of the per-class F1 over {Left, Right}.
inline double macro_f1(const std::vector<Ideology>& pred, const std::vector<Ideology>& gold) {
  if (pred.size() != gold.size()) throw ValidationError("macro_f1 length mismatch");
  if (pred.empty()) throw ValidationError("macro_f1 on empty labels");
  double total = 0.0;
  for (Ideology cls : {Ideology::Left, Ideology::Right}) {
    BinaryCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool p = pred[i] == cls, g = gold[i] == cls;
      if (p && g) ++c.tp;
      else if (p && !g) ++c.fp;
      else if (!p && g) ++c.fn;
    }
    total += f1_from_counts(c);
  }
  return total / 2.0;
}

/// F1 of the positive (partisan) class. No gold positives: 0 with a warning.
inline double partisan_f1(const std::vector<bool>& pred, const std::vector<bool>& gold,
                          std::vector<std::string>* warnings = nullptr) {
  if (pred.size() != gold.size()) throw ValidationError("partisan_f1 length mismatch");
  if (pred.empty()) throw ValidationError("partisan_f1 on empty labels");
  BinaryCounts c;
  bool any_gold = false;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gold[i]) any_gold = true;
    if (pred[i] && gold[i]) ++c.tp;
    else if (pred[i] && !gold[i]) ++c.fp;
    else if (!pred[i] && gold[i]) ++c.fn;
  }
  if (!any_gold) {
    if (warnings) warnings->push_back("partisan_f1: no gold positives; F1 defined as 0");
    return 0.0;
  }
  return f1_from_counts(c);
}

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

inline MeanSd mean_sd(const std::vector<double>& xs) {
  MeanSd out;
  out.n = xs.size();
  if (xs.empty()) return out;
  double s = 0.0;
  for (double x : xs) s += x;
  out.mean = s / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double q = 0.0;
    for (double x : xs) q += (x - out.mean) * (x - out.mean);
    out.sd = std::sqrt(q / static_cast<double>(xs.size() - 1));
  }
  return out;
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) throw ValidationError("median of nothing");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace plens
