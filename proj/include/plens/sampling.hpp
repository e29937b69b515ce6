#pragma once

// Differentiable top-k subset sampling for latent event selection.
//
// Construction: perturb logits with standard Gumbel noise, then run k
// successive temperature-tau softmax rounds where already-selected soft mass
// suppresses a position (additive log(1-p) after the temperature division).
// Each round contributes total mass 1, so the raw sum is exactly k; entries
// can overshoot 1, which a one-step capped renormalization repairs
// (min(m,1) plus the deficit spread proportionally to head-room 1-m). That
// map is order-preserving and differentiable a.e., and is the identity when
// nothing overshoots.
//
// Binarizing the soft vector at rank k recovers the hard top-k of the
// perturbed logits (the exact Gumbel-top-k / Plackett-Luce process that
// `inclusion_marginals_bruteforce` enumerates); the tau -> 0 limit saturates
// to that indicator.
//
// Two implementations share the algorithm and the random stream: a plain
// double version for hot loops and tests, and a graph version used in
// training where gradients must reach the extractor logits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "plens/common.hpp"
#include "plens/tensor.hpp"

namespace plens {

struct SamplingConfig {
  int k_percent = 30;
  double temperature = 0.5;
  bool straight_through = false;
};

inline void validate_sampling_config(const SamplingConfig& cfg) {
  if (cfg.k_percent < 1 || cfg.k_percent > 100)
    throw ValidationError("k_percent must lie in [1,100]");
  if (cfg.temperature <= 0.0) throw ValidationError("temperature must be positive");
}

/// Shared count rule: max(1, round(fraction * L)), clamped to L.
inline std::size_t resolve_fraction(std::size_t L, double fraction) {
  if (L < 1) throw ValidationError("resolve_fraction needs L >= 1");
  auto k = static_cast<std::size_t>(std::max<long>(1, std::lround(fraction * static_cast<double>(L))));
  return std::min(k, L);
}

inline std::size_t resolve_k(std::size_t L, int k_percent) {
  return resolve_fraction(L, static_cast<double>(k_percent) / 100.0);
}

/// Indicator of the k largest logits; ties go to the lower index.
inline std::vector<double> hard_topk(const std::vector<double>& logits, std::size_t k) {
  const std::size_t L = logits.size();
  if (k < 1 || k > L) throw ValidationError("hard_topk k out of range");
  std::vector<std::size_t> idx(L);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  std::vector<double> out(L, 0.0);
  for (std::size_t i = 0; i < k; ++i) out[idx[i]] = 1.0;
  return out;
}

namespace detail {

inline constexpr double kSuppressFloor = 1e-30;

/// Soft top-k of already-perturbed logits; consumes no randomness. Selected
/// mass is suppressed in the original logit scale (alpha += log(1-q)), so the
/// suppression survives the 1/tau scaling and the tau->0 limit is exactly
/// hard_topk.
inline std::vector<double> relaxed_topk_of(const std::vector<double>& perturbed, std::size_t k,
                                           double tau) {
  const std::size_t L = perturbed.size();
  if (k == L) return std::vector<double>(L, 1.0);
  std::vector<double> alpha(perturbed), a(L), p(L, 0.0);
  for (std::size_t round = 0; round < k; ++round) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < L; ++i) {
      a[i] = alpha[i] / tau;
      mx = std::max(mx, a[i]);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < L; ++i) {
      a[i] = std::exp(a[i] - mx);
      z += a[i];
    }
    for (std::size_t i = 0; i < L; ++i) {
      const double q = a[i] / z;
      p[i] += q;
      alpha[i] += std::log(std::max(1.0 - q, kSuppressFloor));
    }
  }
  // Capped renormalization: clip at 1, spread the deficit by head-room.
  double deficit = static_cast<double>(k);
  double headroom = 0.0;
  for (std::size_t i = 0; i < L; ++i) {
    p[i] = std::min(p[i], 1.0);
    deficit -= p[i];
    headroom += 1.0 - p[i];
  }
  if (deficit > 0.0 && headroom > 0.0) {
    const double ratio = deficit / headroom;
    for (std::size_t i = 0; i < L; ++i) p[i] = std::min(1.0, p[i] + ratio * (1.0 - p[i]));
  }
  return p;
}

}  // namespace detail

struct RelaxedSample {
  std::vector<double> values;     // soft (or hard under straight-through)
  std::vector<double> perturbed;  // Gumbel-perturbed logits
};

/// Plain relaxed sample. Draws exactly L Gumbel variates from `rng`.
inline RelaxedSample relaxed_sample(const std::vector<double>& logits, std::size_t k, double tau,
                                    Rng& rng, bool straight_through = false) {
  const std::size_t L = logits.size();
  if (k < 1 || k > L) throw ValidationError("relaxed_sample k out of range");
  if (tau <= 0.0) throw ValidationError("temperature must be positive");
  RelaxedSample out;
  out.perturbed.resize(L);
  for (std::size_t i = 0; i < L; ++i) out.perturbed[i] = logits[i] + gumbel(rng);
  out.values = detail::relaxed_topk_of(out.perturbed, k, tau);
  if (straight_through) out.values = hard_topk(out.perturbed, k);
  return out;
}

/// Graph relaxed sample over a (1,L) logits row: same algorithm and the same
/// random stream as the plain version, with gradients flowing to `logits`.
/// Returns a (1,L) tensor; under straight-through the forward values are the
/// hard indicator while gradients follow the soft relaxation.
template <class S>
Tensor<S> relaxed_sample_graph(const Tensor<S>& logits, std::size_t k, double tau, Rng& rng,
                               bool straight_through = false) {
  if (logits.rows() != 1) throw ValidationError("relaxed_sample_graph expects a (1,L) row");
  const std::size_t L = logits.cols();
  if (k < 1 || k > L) throw ValidationError("relaxed_sample_graph k out of range");
  if (tau <= 0.0) throw ValidationError("temperature must be positive");

  std::vector<S> noise(L);
  for (std::size_t i = 0; i < L; ++i) noise[i] = static_cast<S>(gumbel(rng));
  Tensor<S> perturbed = add(logits, Tensor<S>::constant(1, L, noise));
  if (k == L) {
    Tensor<S> ones = Tensor<S>::constant(1, L, std::vector<S>(L, S(1)));
    // Keeps the graph connected so gradients exist (and are zero).
    return add(ones, scale(perturbed, S(0)));
  }

  Tensor<S> alpha = perturbed;
  Tensor<S> p = Tensor<S>::zeros(1, L);
  for (std::size_t round = 0; round < k; ++round) {
    Tensor<S> q = softmax_rows(scale(alpha, S(1.0 / tau)));
    p = add(p, q);
    alpha = add(alpha, log_t(clamp_min(add_scalar(scale(q, S(-1)), S(1)),
                                       static_cast<S>(detail::kSuppressFloor))));
  }
  Tensor<S> capped = clamp_max(p, S(1));
  Tensor<S> headroom = add_scalar(scale(capped, S(-1)), S(1));
  Tensor<S> deficit = sub(Tensor<S>::constant(1, 1, {static_cast<S>(k)}), sum(capped));
  Tensor<S> denom = clamp_min(sum(headroom), static_cast<S>(1e-12));
  Tensor<S> soft = clamp_max(add(capped, scale_by(headroom, div(deficit, denom))), S(1));

  if (straight_through) {
    std::vector<double> pert(L);
    for (std::size_t i = 0; i < L; ++i) pert[i] = static_cast<double>(perturbed.at(0, i));
    std::vector<double> hard = hard_topk(pert, k);
    std::vector<S> delta(L);
    for (std::size_t i = 0; i < L; ++i)
      delta[i] = static_cast<S>(hard[i]) - soft.at(0, i);
    return add(soft, Tensor<S>::constant(1, L, delta));
  }
  return soft;
}

/// Exact inclusion probability of each index in the Gumbel-top-k selection,
/// by enumerating ordered k-prefixes of the without-replacement softmax
/// process. L <= 8.
inline std::vector<double> inclusion_marginals_bruteforce(const std::vector<double>& logits,
                                                          std::size_t k) {
  const std::size_t L = logits.size();
  if (L > 8) throw ValidationError("brute-force marginals limited to L <= 8");
  if (k < 1 || k > L) throw ValidationError("marginals k out of range");
  std::vector<double> u(L), marg(L, 0.0);
  for (std::size_t i = 0; i < L; ++i) u[i] = std::exp(logits[i]);

  std::vector<bool> taken(L, false);
  std::vector<std::size_t> prefix;
  double rest = std::accumulate(u.begin(), u.end(), 0.0);

  // Depth-first enumeration of ordered prefixes, accumulating P(prefix).
  auto recurse = [&](auto&& self, double prob, double remaining) -> void {
    if (prefix.size() == k) {
      for (std::size_t i : prefix) marg[i] += prob;
      return;
    }
    for (std::size_t i = 0; i < L; ++i) {
      if (taken[i]) continue;
      taken[i] = true;
      prefix.push_back(i);
      self(self, prob * u[i] / remaining, remaining - u[i]);
      prefix.pop_back();
      taken[i] = false;
    }
  };
  recurse(recurse, 1.0, rest);
  return marg;
}

/// Exact probability of each k-subset (bitmask keyed) under the same process.
/// Test oracle for goodness-of-fit over whole subsets.
inline std::map<std::uint32_t, double> topk_subset_probabilities(
    const std::vector<double>& logits, std::size_t k) {
  const std::size_t L = logits.size();
  if (L > 8) throw ValidationError("brute-force subsets limited to L <= 8");
  if (k < 1 || k > L) throw ValidationError("subset k out of range");
  std::vector<double> u(L);
  for (std::size_t i = 0; i < L; ++i) u[i] = std::exp(logits[i]);

  std::map<std::uint32_t, double> out;
  std::vector<bool> taken(L, false);
  double rest = std::accumulate(u.begin(), u.end(), 0.0);

  auto recurse = [&](auto&& self, double prob, double remaining, std::uint32_t mask,
                     std::size_t depth) -> void {
    if (depth == k) {
      out[mask] += prob;
      return;
    }
    for (std::size_t i = 0; i < L; ++i) {
      if (taken[i]) continue;
      taken[i] = true;
      self(self, prob * u[i] / remaining, remaining - u[i], mask | (1u << i), depth + 1);
      taken[i] = false;
    }
  };
  recurse(recurse, 1.0, rest, 0, 0);
  return out;
}

}  // namespace plens
