// Tensor algebra and optimizer: every differentiable op is checked against
// central finite differences at 64-bit, AdamW against a hand-rolled scalar
// trace, and the hash / statistics helpers against frozen reference values.

#include <gtest/gtest.h>

#include "plens/metrics.hpp"
#include "plens/optim.hpp"
#include "plens/tensor.hpp"
#include "testutil.hpp"

using namespace plens;

namespace {

constexpr double kGradTol = 1e-4;

// Values bounded away from relu / max kinks so central differences are valid.
std::vector<double> smooth_values(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) {
    const double m = 0.2 + 0.8 * uniform01(rng);
    x = bernoulli(rng, 0.5) ? m : -m;
  }
  return v;
}

// Distinct positive weights; prevents gradient errors cancelling in the sum.
Tensor<double> probe(std::size_t r, std::size_t c) {
  std::vector<double> v(r * c);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.3 + 0.07 * static_cast<double>(i % 13);
  return Tensor<double>::constant(r, c, std::move(v));
}

Tensor<double> weigh(const Tensor<double>& t) { return sum(mul(t, probe(t.rows(), t.cols()))); }

}  // namespace

TEST(Grad, ElementwiseAndMatmulOps) {
  Rng rng(101);
  ParameterStore<double> ps;
  Tensor<double> a = ps.create("a", 3, 4, smooth_values(12, rng));
  Tensor<double> b = ps.create("b", 3, 4, smooth_values(12, rng));
  Tensor<double> w = ps.create("w", 4, 2, smooth_values(8, rng));
  Tensor<double> row = ps.create("row", 1, 4, smooth_values(4, rng));
  Tensor<double> s = ps.create("s", 3, 1, smooth_values(3, rng));

  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(add(a, b)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(sub(a, b)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(mul(a, b)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(div(a, add_scalar(mul(b, b), 0.5))); }),
            kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(scale(a, -1.7)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(add_scalar(a, 0.9)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(matmul(a, w)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(matmul_nt(a, b)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(add_rowvec(a, row)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(scale_rows(a, s)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(scale_by(a, pick(b, 0, 0))); }), kGradTol);
}

TEST(Grad, ShapeAndReductionOps) {
  Rng rng(202);
  ParameterStore<double> ps;
  Tensor<double> a = ps.create("a", 4, 3, smooth_values(12, rng));
  Tensor<double> b = ps.create("b", 2, 3, smooth_values(6, rng));

  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(gather_rows(a, {2, 0, 2})); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(mean_rows(a)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(concat_cols<double>({a, gather_rows(b, {0, 1, 0, 1})})); }),
            kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(stack_rows<double>({a, b})); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(slice_rows(a, 1, 3)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(slice_cols(a, 0, 2)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(reshape(a, 3, 4)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return sum(a); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return mean(a); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return pick(a, 2, 1); }), kGradTol);
}

TEST(Grad, NonlinearOps) {
  Rng rng(303);
  ParameterStore<double> ps;
  Tensor<double> a = ps.create("a", 3, 5, smooth_values(15, rng));
  Tensor<double> gain = ps.create("gain", 1, 5, smooth_values(5, rng));
  Tensor<double> bias = ps.create("bias", 1, 5, smooth_values(5, rng));
  std::vector<double> mask(15, 0.0);  // (3,5) elementwise additive offsets
  mask[2] = mask[9] = mask[14] = -1e9;

  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(relu(a)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(softmax_rows(a)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(softmax_rows(a, &mask)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(log_softmax_rows(a)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(layer_norm(a, gain, bias)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] {
              Rng drop(7);  // same mask on every rebuild
              return weigh(dropout(a, 0.4, drop, true));
            }),
            kGradTol);
}

TEST(Grad, LayersAndEncoderBlock) {
  Rng rng(404);
  ParameterStore<double> ps;
  Tensor<double> x = ps.create("x", 5, 8, smooth_values(40, rng));

  Rng init(11);
  Linear<double> lin(ps, "lin", 8, 4, init);
  LayerNormLayer<double> ln(ps, "ln", 8);
  EncoderConfig ec;
  ec.dim = 8;
  ec.heads = 2;
  ec.layers = 2;
  ec.ffn = 16;
  ec.dropout = 0.0;
  TransformerEncoder<double> tr(ps, "tr", ec, init);
  std::vector<double> mask(25, 0.0);  // 5 tokens; keys 3,4 hidden from all queries
  for (int i = 0; i < 5; ++i)
    for (int j = 3; j < 5; ++j) mask[i * 5 + j] = -1e9;

  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(lin.forward(x)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps, [&] { return weigh(ln.forward(x)); }), kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps,
                             [&] {
                               Rng fwd(3);
                               return weigh(tr.forward(x, nullptr, fwd, false));
                             }),
            kGradTol);
  EXPECT_LT(tu::fd_gradcheck(ps,
                             [&] {
                               Rng fwd(3);
                               return weigh(tr.forward(x, &mask, fwd, false));
                             }),
            kGradTol);
}

TEST(Grad, SoftmaxJacobianRowsSumToZero) {
  Rng rng(505);
  ParameterStore<double> ps;
  Tensor<double> a = ps.create("a", 4, 6, smooth_values(24, rng));
  ps.zero_grad();
  Tensor<double> total = sum(softmax_rows(a));
  backward(total);
  // d(sum of each row's softmax)/dx = 0: probabilities trade mass only.
  for (double g : ps.entries().at("a").t.grad()) EXPECT_NEAR(g, 0.0, 1e-12);
}

TEST(Tensor, ValueSemanticsAndErrors) {
  Tensor<double> a = Tensor<double>::constant(2, 2, {1, 2, 3, 4});
  Tensor<double> b = Tensor<double>::constant(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_THROW(add(a, b), ValidationError);
  EXPECT_NO_THROW(matmul(a, b));  // 2x2 * 2x3 is fine
  EXPECT_THROW(matmul(b, a), ValidationError);
  EXPECT_THROW(Tensor<double>::constant(2, 2, {1, 2, 3}), ValidationError);
  EXPECT_THROW(pick(a, 2, 0), ValidationError);
  EXPECT_THROW(gather_rows(a, {5}), ValidationError);

  Tensor<double> s = sum(a);
  EXPECT_DOUBLE_EQ(s.values()[0], 10.0);
  EXPECT_DOUBLE_EQ(mean(a).values()[0], 2.5);
}

TEST(Tensor, StaleGraphRejectedAfterMutation) {
  ParameterStore<double> ps;
  Tensor<double> a = ps.create("a", 2, 2, {1, 2, 3, 4});
  Tensor<double> b = ps.create("b", 2, 2, {1, 0, 0, 1});
  Tensor<double> loss = sum(matmul(a, b));
  ps.assign_values("a", {5, 6, 7, 8});  // bumps version
  EXPECT_THROW(backward(loss), RuntimeFailure) << "backward through stale values must fail";
}

TEST(AdamW, MatchesScalarReferenceTrace) {
  // Hand-rolled double trace: w0=0.5, g=1, lr=0.1, wd=0.01, betas 0.9/0.999,
  // eps=1e-8, no warmup, total_steps=10 (so lr_t = 0.1*(10-t)/10).
  ParameterStore<double> ps;
  Tensor<double> w = ps.create("w", 1, 1, {0.5});
  OptimizerConfig oc;
  oc.lr = 0.1;
  oc.weight_decay = 0.01;
  oc.warmup_fraction = 0.0;
  oc.total_steps = 10;
  const double expected[3] = {0.4095500009, 0.32922236169928054, 0.25899190674609107};
  for (int t = 0; t < 3; ++t) {
    ps.zero_grad();
    backward(sum(w));  // gradient exactly 1
    adamw_step(ps, oc);
    EXPECT_NEAR(ps.entries().at("w").t.values()[0], expected[t], 1e-12) << "step " << t + 1;
  }
}

TEST(AdamW, FixedPointAndSchedule) {
  ParameterStore<double> ps;
  ps.create("w", 1, 2, {1.5, -2.5});
  OptimizerConfig oc;
  oc.lr = 0.1;
  oc.weight_decay = 0.0;
  oc.total_steps = 100;
  adamw_step(ps, oc);  // no gradient accumulated: zero-grad step
  EXPECT_DOUBLE_EQ(ps.entries().at("w").t.values()[0], 1.5);
  EXPECT_DOUBLE_EQ(ps.entries().at("w").t.values()[1], -2.5);

  OptimizerConfig sc;
  sc.lr = 3e-4;
  sc.warmup_fraction = 0.1;
  sc.total_steps = 100;
  EXPECT_DOUBLE_EQ(scheduled_lr(sc, 10), 3e-4) << "peak exactly at warmup end";
  EXPECT_DOUBLE_EQ(scheduled_lr(sc, 5), 1.5e-4) << "linear ramp";
  EXPECT_DOUBLE_EQ(scheduled_lr(sc, 100), 0.0) << "decays to zero at the horizon";
  EXPECT_DOUBLE_EQ(scheduled_lr(sc, 55), 3e-4 * 0.5) << "linear decay midpoint";

  OptimizerConfig bad;
  bad.lr = -1.0;
  EXPECT_THROW(validate_optimizer_config(bad), ValidationError);
}

TEST(Hash, Fnv1a64FrozenValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("hello"), 0xa430d84680aabd0bull);
  EXPECT_EQ(fnv1a64("abc"), 0xe71fa2190541574bull);
  EXPECT_EQ(hex_u64(0xcbf29ce484222325ull), "cbf29ce484222325");
  EXPECT_EQ(hex_u64(0x1ull), "0000000000000001");
}

TEST(Stats, MeanSdMedianOracles) {
  MeanSd ms = mean_sd({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(ms.mean, 2.5);
  EXPECT_DOUBLE_EQ(ms.sd, std::sqrt(5.0 / 3.0));  // sample sd
  EXPECT_EQ(ms.n, 4u);
  EXPECT_DOUBLE_EQ(mean_sd({7.0}).sd, 0.0);
  EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_THROW(median({}), ValidationError);
}
