#pragma once

// Layers over the tensor core: parameter registry, linear maps, layer norm,
// multi-head self-attention with additive masks, and the pre-norm transformer
// encoder. Attention matrices can be recorded for attention-based baselines.

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "plens/common.hpp"
#include "plens/tensor.hpp"

namespace plens {

/// Named parameters plus per-parameter optimizer moments. Names are unique;
/// iteration order (std::map) is deterministic, which training relies on.
template <class S>
class ParameterStore {
 public:
  struct Entry {
    Tensor<S> t;
    std::vector<S> m, v;  // Adam moments, allocated lazily
  };

  Tensor<S> create(const std::string& name, std::size_t r, std::size_t c, std::vector<S> init) {
    if (map_.count(name)) throw ValidationError("duplicate parameter name: " + name);
    Entry e;
    e.t = Tensor<S>::param(r, c, std::move(init));
    auto [it, ok] = map_.emplace(name, std::move(e));
    (void)ok;
    return it->second.t;
  }

  bool has(const std::string& name) const { return map_.count(name) != 0; }

  Tensor<S> get(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) throw ValidationError("unknown parameter: " + name);
    return it->second.t;
  }

  std::map<std::string, Entry>& entries() { return map_; }
  const std::map<std::string, Entry>& entries() const { return map_; }

  void zero_grad() {
    for (auto& [name, e] : map_) e.t.zero_grad();
  }

  /// Overwrites a parameter's values (shape-checked) and invalidates graphs.
  void assign_values(const std::string& name, const std::vector<S>& v) {
    auto it = map_.find(name);
    if (it == map_.end()) throw ValidationError("unknown parameter: " + name);
    auto& t = it->second.t;
    if (v.size() != t.size()) throw ValidationError("assign_values size mismatch for " + name);
    t.values() = v;
    t.bump_version();
  }

  std::map<std::string, std::vector<S>> snapshot_values() const {
    std::map<std::string, std::vector<S>> out;
    for (const auto& [name, e] : map_) out[name] = e.t.values();
    return out;
  }

  void restore_values(const std::map<std::string, std::vector<S>>& snap) {
    for (const auto& [name, v] : snap) assign_values(name, v);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, e] : map_) n += e.t.size();
    return n;
  }

  struct StateSnapshot {
    std::map<std::string, std::vector<S>> values;
    std::map<std::string, std::pair<std::vector<S>, std::vector<S>>> moments;
    std::uint64_t step = 0;
  };

  /// Captures values plus optimizer state so training can roll back to the
  /// best epoch and still resume or checkpoint consistently.
  StateSnapshot snapshot_state() const {
    StateSnapshot snap;
    snap.values = snapshot_values();
    for (const auto& [name, e] : map_)
      if (!e.m.empty()) snap.moments[name] = {e.m, e.v};
    snap.step = step;
    return snap;
  }

  void restore_state(const StateSnapshot& snap) {
    restore_values(snap.values);
    for (auto& [name, e] : map_) {
      auto it = snap.moments.find(name);
      if (it == snap.moments.end()) {
        e.m.clear();
        e.v.clear();
      } else {
        e.m = it->second.first;
        e.v = it->second.second;
      }
    }
    step = snap.step;
  }

  std::uint64_t step = 0;

 private:
  std::map<std::string, Entry> map_;
};

namespace detail {

/// Scaled-uniform init for linear maps: U(-a, a), a = sqrt(6/(fan_in+fan_out)).
template <class S>
std::vector<S> uniform_init(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<S> v(fan_in * fan_out);
  for (auto& x : v) x = static_cast<S>((uniform01(rng) * 2.0 - 1.0) * a);
  return v;
}

}  // namespace detail

template <class S>
struct Linear {
  Tensor<S> w;  // (in, out)
  Tensor<S> b;  // (1, out)

  Linear() = default;
  Linear(ParameterStore<S>& ps, const std::string& name, std::size_t in, std::size_t out,
         Rng& rng) {
    w = ps.create(name + ".w", in, out, detail::uniform_init<S>(in, out, rng));
    b = ps.create(name + ".b", 1, out, std::vector<S>(out, S(0)));
  }

  Tensor<S> forward(const Tensor<S>& x) const { return add_rowvec(matmul(x, w), b); }
};

template <class S>
struct LayerNormLayer {
  Tensor<S> gain;  // ones
  Tensor<S> bias;  // zeros

  LayerNormLayer() = default;
  LayerNormLayer(ParameterStore<S>& ps, const std::string& name, std::size_t dim) {
    gain = ps.create(name + ".g", 1, dim, std::vector<S>(dim, S(1)));
    bias = ps.create(name + ".b", 1, dim, std::vector<S>(dim, S(0)));
  }

  Tensor<S> forward(const Tensor<S>& x) const { return layer_norm(x, gain, bias); }
};

template <class S>
struct MultiHeadAttention {
  Linear<S> wq, wk, wv, wo;
  std::size_t heads = 0, dim = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore<S>& ps, const std::string& name, std::size_t dim_,
                     std::size_t heads_, Rng& rng)
      : wq(ps, name + ".q", dim_, dim_, rng),
        wk(ps, name + ".k", dim_, dim_, rng),
        wv(ps, name + ".v", dim_, dim_, rng),
        wo(ps, name + ".o", dim_, dim_, rng),
        heads(heads_),
        dim(dim_) {
    if (dim_ % heads_ != 0) throw ValidationError("model dim must divide by head count");
  }

  /// mask: additive logit offsets (T*T, row-major), or nullptr for full
  /// attention. When `record` is non-null, per-head attention matrices
  /// (post-softmax values) are appended to it.
  Tensor<S> forward(const Tensor<S>& x, const std::vector<S>* mask,
                    std::vector<std::vector<S>>* record = nullptr) const {
    const std::size_t dh = dim / heads;
    const S inv_sqrt = S(1.0 / std::sqrt(static_cast<double>(dh)));
    Tensor<S> q = wq.forward(x), k = wk.forward(x), v = wv.forward(x);
    std::vector<Tensor<S>> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      Tensor<S> qh = slice_cols(q, h * dh, (h + 1) * dh);
      Tensor<S> kh = slice_cols(k, h * dh, (h + 1) * dh);
      Tensor<S> vh = slice_cols(v, h * dh, (h + 1) * dh);
      Tensor<S> scores = scale(matmul_nt(qh, kh), inv_sqrt);
      Tensor<S> attn = softmax_rows(scores, mask);
      if (record) record->push_back(attn.values());
      outs.push_back(matmul(attn, vh));
    }
    return wo.forward(concat_cols(outs));
  }
};

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t dim = 64;
  std::size_t ffn = 128;
  double dropout = 0.1;
};

/// Pre-norm residual blocks with a final layer norm:
///   x += Drop(Attn(LN(x)));  x += Drop(W2 Drop(ReLU(W1 LN(x))))
template <class S>
struct TransformerEncoder {
  struct Block {
    LayerNormLayer<S> ln1, ln2;
    MultiHeadAttention<S> attn;
    Linear<S> ff1, ff2;
  };

  EncoderConfig cfg;
  std::vector<Block> blocks;
  LayerNormLayer<S> final_ln;

  TransformerEncoder() = default;
  TransformerEncoder(ParameterStore<S>& ps, const std::string& name, const EncoderConfig& cfg_,
                     Rng& rng)
      : cfg(cfg_) {
    blocks.resize(cfg.layers);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::string p = name + ".b" + std::to_string(l);
      blocks[l].ln1 = LayerNormLayer<S>(ps, p + ".ln1", cfg.dim);
      blocks[l].ln2 = LayerNormLayer<S>(ps, p + ".ln2", cfg.dim);
      blocks[l].attn = MultiHeadAttention<S>(ps, p + ".attn", cfg.dim, cfg.heads, rng);
      blocks[l].ff1 = Linear<S>(ps, p + ".ff1", cfg.dim, cfg.ffn, rng);
      blocks[l].ff2 = Linear<S>(ps, p + ".ff2", cfg.ffn, cfg.dim, rng);
    }
    final_ln = LayerNormLayer<S>(ps, name + ".lnf", cfg.dim);
  }

  /// `attention`, when non-null, receives the last block's per-head attention
  /// matrices (every block's with `record_all_layers`).
  Tensor<S> forward(Tensor<S> x, const std::vector<S>* mask, Rng& rng, bool training,
                    std::vector<std::vector<S>>* attention = nullptr,
                    bool record_all_layers = false) const {
    for (std::size_t l = 0; l < blocks.size(); ++l) {
      const Block& blk = blocks[l];
      auto* rec = (record_all_layers || l + 1 == blocks.size()) ? attention : nullptr;
      Tensor<S> a = blk.attn.forward(blk.ln1.forward(x), mask, rec);
      x = add(x, dropout(a, cfg.dropout, rng, training));
      Tensor<S> h = blk.ff1.forward(blk.ln2.forward(x));
      h = blk.ff2.forward(dropout(relu(h), cfg.dropout, rng, training));
      x = add(x, dropout(h, cfg.dropout, rng, training));
    }
    return final_ln.forward(x);
  }
};

}  // namespace plens
