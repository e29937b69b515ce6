#pragma once

// AdamW with a linear warmup / linear decay schedule. Updates run in double
// internally regardless of parameter precision; moments are stored at
// parameter precision.

#include <cmath>
#include <cstdint>

#include "plens/nn.hpp"

namespace plens {

struct OptimizerConfig {
  double lr = 5e-5;
  double weight_decay = 1e-4;
  double warmup_fraction = 0.06;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t total_steps = 1;  // schedule horizon; set by the training loop
};

inline void validate_optimizer_config(const OptimizerConfig& cfg) {
  if (cfg.lr <= 0.0) throw ValidationError("learning rate must be positive");
  if (cfg.weight_decay < 0.0) throw ValidationError("weight decay must be non-negative");
  if (cfg.warmup_fraction < 0.0 || cfg.warmup_fraction >= 1.0)
    throw ValidationError("warmup fraction must lie in [0,1)");
  if (cfg.beta1 <= 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 <= 0.0 || cfg.beta2 >= 1.0)
    throw ValidationError("betas must lie in (0,1)");
  if (cfg.eps <= 0.0) throw ValidationError("epsilon must be positive");
  if (cfg.total_steps < 1) throw ValidationError("total_steps must be >= 1");
}

/// Learning rate at 1-based step: linear ramp to the peak over the warmup
/// steps, peak exactly at the warmup end, then linear decay to 0 at
/// total_steps.
inline double scheduled_lr(const OptimizerConfig& cfg, std::uint64_t step) {
  const double total = static_cast<double>(cfg.total_steps);
  const double warm = std::floor(cfg.warmup_fraction * total);
  const double s = static_cast<double>(step);
  if (warm >= 1.0 && s <= warm) return cfg.lr * s / warm;
  if (total <= warm) return cfg.lr;
  const double f = (total - s) / (total - warm);
  return cfg.lr * (f > 0.0 ? f : 0.0);
}

/// One decoupled-weight-decay Adam step over every parameter in the store.
/// Parameters without an accumulated gradient are treated as zero-gradient
/// (their moments still decay). Bumps each tensor's version.
template <class S>
void adamw_step(ParameterStore<S>& ps, const OptimizerConfig& cfg) {
  validate_optimizer_config(cfg);
  ++ps.step;
  const double lr_t = scheduled_lr(cfg, ps.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(ps.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(ps.step));
  for (auto& [name, e] : ps.entries()) {
    auto& vals = e.t.values();
    const auto& grad = e.t.grad();
    if (!grad.empty() && grad.size() != vals.size())
      throw RuntimeFailure("gradient shape mismatch for " + name);
    if (e.m.size() != vals.size()) {
      e.m.assign(vals.size(), S(0));
      e.v.assign(vals.size(), S(0));
    }
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
      const double m = cfg.beta1 * static_cast<double>(e.m[i]) + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * static_cast<double>(e.v[i]) + (1.0 - cfg.beta2) * g * g;
      e.m[i] = static_cast<S>(m);
      e.v[i] = static_cast<S>(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      const double p = static_cast<double>(vals[i]);
      vals[i] = static_cast<S>(
          p - lr_t * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p));
    }
    e.t.bump_version();
  }
}

}  // namespace plens
