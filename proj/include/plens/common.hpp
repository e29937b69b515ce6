#pragma once

// Shared plumbing: stable hashing, seeded random draws, error types, string
// helpers, and the worker-thread cap honored by parallel evaluation loops.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace plens {

inline constexpr const char* kVersion = "0.1.0";

/// Bad inputs: malformed files, broken invariants, invalid configs (CLI exit 1).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Failures at run time: divergence, I/O on outputs, internal errors (CLI exit 2).
struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// FNV-1a. Stable across runs and platforms; used for token hashing and
// artifact digests.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x00000100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

using Rng = std::mt19937_64;

// mt19937_64 output is pinned by the standard; the std::*_distribution
// mappings are not, so all draws below are hand-rolled.

/// Uniform draw in the open interval (0,1); safe as a log() argument.
inline double uniform01(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

/// Uniform integer in [0, n). Modulo mapping; bias is ~n/2^64.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  return n == 0 ? 0 : rng() % n;
}

inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(uniform_below(rng, static_cast<std::uint64_t>(hi - lo + 1)));
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

inline double gumbel(Rng& rng) { return -std::log(-std::log(uniform01(rng))); }

/// Fisher-Yates with hand-rolled index draws.
template <class T>
void shuffle_inplace(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

inline std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::string hex_u64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return out;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

/// Worker cap shared by `--threads` / PARTISAN_LENS_THREADS. Default 1.
inline std::atomic<int>& worker_threads() {
  static std::atomic<int> n{1};
  return n;
}

/// Index-parallel loop over [0, n). Caller guarantees f(i) touches disjoint
/// state per index. Runs inline when the cap is 1.
template <class F>
void parallel_for(std::size_t n, F&& f) {
  int want = std::min<int>(worker_threads().load(), static_cast<int>(n));
  if (want <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(want));
  for (int t = 0; t < want; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) f(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace plens
