#include <gtest/gtest.h>

#include <cmath>

#include "protoseg/core/error.hpp"
#include "protoseg/loss/losses.hpp"
#include "protoseg/model/network.hpp"
#include "protoseg/verify/gradcheck.hpp"
#include "protoseg/verify/oracles.hpp"
#include "protoseg/verify/suites.hpp"

using namespace protoseg;
using namespace protoseg::model;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void set_under(const nn::ParamStore& store, const std::string& prefix, double value) {
  for (auto [name, p] : store.under(prefix)) p.mutable_value().fill(value);
}

Tensor& value_of(const nn::ParamStore& store, const std::string& path) {
  ag::Var v = store.at(path);
  return v.node()->value;
}

double max_sum_deviation(const Tensor& p) {
  double worst = 0.0;
  const std::size_t n = p.spatial_size();
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (int c = 0; c < p.channels(); ++c) s += p[c * n + j];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

ModelConfig tiny(int base = 1) {
  ModelConfig c;
  c.base_channels = base;
  return c;
}

}  // namespace

TEST(Backbone, EncoderLadderAt32) {
  const ModelConfig cfg;
  Rng rng(0);
  nn::ParamStore store;
  const Encoder single(store, "e1", 1, cfg, rng), joint(store, "e4", 4, cfg, rng);
  const Shape expected[5] = {{4, 32, 32, 32}, {8, 16, 16, 16}, {16, 8, 8, 8}, {32, 4, 4, 4}, {64, 2, 2, 2}};
  const Ladder a = single(ag::constant(Tensor::volume(1, {32, 32, 32}, 0.3)));
  const Ladder b = joint(ag::constant(Tensor::volume(4, {32, 32, 32}, 0.3)));
  for (int l = 0; l < 5; ++l) {
    EXPECT_EQ(a[l].shape(), expected[l]);
    EXPECT_EQ(b[l].shape(), expected[l]);
  }
}

TEST(Backbone, ZeroInputZeroBiasGivesZeroFeatures) {
  ModelConfig cfg = tiny(2);
  Rng rng(3);
  nn::ParamStore store;
  const Encoder enc(store, "enc", 1, cfg, rng);
  for (auto [name, p] : store.entries())
    if (name.ends_with(".bias")) p.mutable_value().fill(0.0);
  for (const Var& f : enc(ag::constant(Tensor::volume(1, {16, 16, 16}, 0.0))))
    for (double v : f.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Backbone, IndivisibleInputIsRejected) {
  Rng rng(0);
  nn::ParamStore store;
  const Encoder enc(store, "enc", 1, tiny(), rng);
  EXPECT_THROW(enc(ag::constant(Tensor::volume(1, {30, 32, 32}))), ShapeError);
  EXPECT_THROW(enc(ag::constant(Tensor::volume(2, {32, 32, 32}))), ShapeError);
}

TEST(Backbone, DecoderOutputsAndSupervisionLadder) {
  const ModelConfig cfg;
  Rng rng(1);
  nn::ParamStore store;
  const Decoder dec(store, "dec", 64, {4, 8, 16, 32}, cfg, rng);
  const std::array<Var, 4> skips{ag::constant(random_tensor({4, 32, 32, 32}, rng)),
                                 ag::constant(random_tensor({8, 16, 16, 16}, rng)),
                                 ag::constant(random_tensor({16, 8, 8, 8}, rng)),
                                 ag::constant(random_tensor({32, 4, 4, 4}, rng))};
  const Var bottleneck = ag::constant(random_tensor({64, 2, 2, 2}, rng));
  const DecoderOutput out = dec(bottleneck, skips, true);
  EXPECT_EQ(out.probabilities.shape(), (Shape{4, 32, 32, 32}));
  EXPECT_LT(max_sum_deviation(out.probabilities.value()), 1e-12);
  for (int b = 0; b < 5; ++b) {
    const int r = 32 >> b;
    EXPECT_EQ(out.block_probabilities[b].shape(), (Shape{4, r, r, r}));
    EXPECT_LT(max_sum_deviation(out.block_probabilities[b].value()), 1e-12);
  }
  const DecoderOutput again = dec(bottleneck, skips, false);
  EXPECT_EQ(max_abs_diff(out.probabilities.value(), again.probabilities.value()), 0.0);
  EXPECT_FALSE(again.block_probabilities[2].defined());

  std::array<Var, 4> bad = skips;
  bad[1] = ag::constant(random_tensor({7, 16, 16, 16}, rng));
  EXPECT_THROW(dec(bottleneck, bad, true), ShapeError);
}

TEST(Backbone, DecoderWithoutBlockHeadsOwnsOnlyTheFinalHead) {
  Rng rng(1);
  nn::ParamStore store;
  const Decoder dec(store, "dec", 16, {1, 2, 4, 8}, tiny(), rng, false);
  int heads = 0;
  for (const auto& [name, p] : store.entries()) heads += name.find(".head.") != std::string::npos;
  EXPECT_EQ(heads, 2);
  EXPECT_TRUE(store.contains("dec.block1.head.weight"));
}

TEST(Backbone, CountParameters) {
  nn::ParamStore empty;
  EXPECT_EQ(count_parameters(empty), 0u);
  nn::ParamStore store;
  Rng rng(0);
  nn::Conv3d conv(store, "c", 4, 4, 1, 1, rng);
  EXPECT_EQ(count_parameters(store), 20u);
  EXPECT_LT(count_parameters(Network(tiny(1)).params()), count_parameters(Network(tiny(2)).params()));
}

TEST(Backbone, SegAndShareDecodersNeverShareParameters) {
  const Network net(tiny(1));
  Rng rng(4);
  const Tensor x = random_tensor({4, 16, 16, 16}, rng);
  const Tensor before = net.predict(x);
  set_under(net.params(), "decoder.share.", 0.5);
  EXPECT_EQ(max_abs_diff(before, net.predict(x)), 0.0);
  set_under(net.params(), "decoder.seg.block1.head.bias", 0.5);
  EXPECT_GT(max_abs_diff(before, net.predict(x)), 0.0);
}

TEST(Backbone, FullNetworkGradientsMatchFiniteDifferences) {
  ModelConfig cfg = tiny(1);
  cfg.init_seed = 5;
  const Network net(cfg);
  const auto c = verify::phantom_cases(1, 32, 2).front();
  const Var x = ag::constant(data::case_to_tensor(c));
  std::vector<std::pair<std::string, Var>> wrt;
  for (const char* p : {"encoder.flair.block1.unit0.conv.weight", "encoder.extra.block5.unit1.conv.weight",
                        "ctp.t2.project.weight", "ctp.cross.flair_from_t1c.q.weight", "ctp.t1.region_head.bias",
                        "pfrf.t1c.drive_et.gate.weight", "pfrf.fusion.out.weight", "kiimi.level2.classify.weight",
                        "kiimi.level3.integrate.restore.weight", "decoder.share.block2.unit1.conv.weight",
                        "decoder.seg.block4.head.weight", "decoder.seg.block1.head.bias"})
    wrt.emplace_back(p, net.params().at(p));
  verify::GradCheckOptions o;
  o.max_entries = 3;
  // Thousands of leaky-ReLU units sit near their kink; a small step keeps
  // the central difference from straddling them.
  o.step = 1e-6;
  const auto entries = verify::gradcheck(
      [&] {
        Rng drop(9);
        return loss::compute_losses(net.forward(x, true, drop), *c.labels, {}, true).total;
      },
      wrt, o);
  for (const auto& e : entries) EXPECT_LT(e.rel_error, 1e-4) << e.name;
}

TEST(Backbone, EveryParameterReceivesGradient) {
  // A 16^3 input leaves one bottleneck voxel, where instance norm has no
  // gradient, so this needs the full 32^3 grid.
  const Network net(tiny(1));
  const auto c = verify::phantom_cases(1, 32, 0).front();
  Rng drop(0);
  const auto l = loss::compute_losses(net.forward(ag::constant(data::case_to_tensor(c)), true, drop), *c.labels, {}, true);
  ag::backward(l.total);
  for (const auto& [name, p] : net.params().entries()) {
    double m = 0.0;
    for (double g : p.grad().values()) m = std::max(m, std::abs(g));
    EXPECT_GT(m, 0.0) << name;
  }
}

// ---------------------------------------------------------------------------

class CtpTest : public ::testing::Test {
 protected:
  CtpTest() : rng(11), ctp(store, "ctp", cfg, rng) {}
  ModelConfig cfg = tiny(1);
  Rng rng;
  nn::ParamStore store;
  Ctp ctp;
};

TEST_F(CtpTest, SingleTokenAttendsToItself) {
  const Tensor f = random_tensor({16, 1, 1, 1}, rng);
  Tensor probs;
  const Tensor got = ctp.self_attend(0, ag::constant(f), &probs).value();
  for (double p : probs.values()) EXPECT_EQ(p, 1.0);
  const Tensor proj = verify::oracle_linear(verify::oracle_tokens(f), value_of(store, "ctp.flair.project.weight"),
                                            value_of(store, "ctp.flair.project.bias"));
  const auto w = verify::attention_weights(store, "ctp.flair.self_attention", cfg.heads);
  const Tensor vpath = verify::oracle_linear(
      verify::oracle_linear(verify::oracle_layer_norm(proj, w.gamma_kv, w.beta_kv), w.wv, Tensor()), w.wo, w.bo);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], proj[i] + vpath[i], 1e-12);
}

TEST_F(CtpTest, IdenticalTokensStayIdentical) {
  Tensor f({16, 2, 2, 1});
  for (int c = 0; c < 16; ++c)
    for (int j = 0; j < 4; ++j) f[c * 4 + j] = 0.1 * c - 0.4;
  const Tensor got = ctp.self_attend(2, ag::constant(f)).value();
  for (int n = 1; n < 4; ++n)
    for (int c = 0; c < 16; ++c) EXPECT_NEAR(got[n * 16 + c], got[c], 1e-12);
}

TEST_F(CtpTest, SelfAttentionMatchesLoopOracleOnThreeTokens) {
  const Tensor f = random_tensor({16, 3, 1, 1}, rng);
  const Tensor got = ctp.self_attend(1, ag::constant(f)).value();
  const Tensor want =
      verify::oracle_self_attend(f, value_of(store, "ctp.t1c.project.weight"), value_of(store, "ctp.t1c.project.bias"),
                                 verify::attention_weights(store, "ctp.t1c.self_attention", cfg.heads));
  EXPECT_LT(max_abs_diff(got, want), 1e-10);
}

TEST_F(CtpTest, ZeroQueryGivesMeanOfValues) {
  value_of(store, "ctp.cross.t1_from_t2.q.weight").fill(0.0);
  const Tensor cur = random_tensor({4, 16}, rng), other = random_tensor({4, 16}, rng);
  const Tensor got = ctp.cross_attend(2, 3, ag::constant(cur), ag::constant(other)).value();
  const auto w = verify::attention_weights(store, "ctp.cross.t1_from_t2", cfg.heads);
  const Tensor v = verify::oracle_linear(verify::oracle_layer_norm(other, w.gamma_kv, w.beta_kv), w.wv, Tensor());
  Tensor mean({1, 16});
  for (int n = 0; n < 4; ++n)
    for (int c = 0; c < 16; ++c) mean[c] += v[n * 16 + c] / 4.0;
  const Tensor expected = verify::oracle_linear(mean, w.wo, w.bo);
  for (int n = 0; n < 4; ++n)
    for (int c = 0; c < 16; ++c) EXPECT_NEAR(got[n * 16 + c], expected[c], 1e-12);
}

TEST_F(CtpTest, SingleKeyBroadcastsItsValue) {
  const Tensor cur = random_tensor({3, 16}, rng), other = random_tensor({1, 16}, rng);
  // Token counts differ, so go through the attention block directly.
  const auto w = verify::attention_weights(store, "ctp.cross.flair_from_t1", cfg.heads);
  const Tensor want = verify::oracle_mha(cur, other, w);
  const Tensor v = verify::oracle_linear(
      verify::oracle_linear(verify::oracle_layer_norm(other, w.gamma_kv, w.beta_kv), w.wv, Tensor()), w.wo, w.bo);
  for (int n = 0; n < 3; ++n)
    for (int c = 0; c < 16; ++c) EXPECT_NEAR(want[n * 16 + c], v[c], 1e-12);
  EXPECT_THROW(ctp.cross_attend(0, 2, ag::constant(cur), ag::constant(other)), ShapeError);
  EXPECT_THROW(ctp.cross_attend(1, 1, ag::constant(cur), ag::constant(cur)), ConfigError);
}

TEST_F(CtpTest, TwoHeadCrossAttentionMatchesOracle) {
  ModelConfig two = tiny(1);
  two.token_width = 8;
  two.heads = 2;
  nn::ParamStore s;
  Rng r(3);
  const Ctp c2(s, "ctp", two, r);
  const Tensor cur = random_tensor({4, 8}, r), other = random_tensor({4, 8}, r);
  Tensor probs;
  const Tensor got = c2.cross_attend(3, 0, ag::constant(cur), ag::constant(other), &probs).value();
  EXPECT_EQ(probs.shape(), (Shape{2, 4, 4}));
  EXPECT_LT(max_abs_diff(got, verify::oracle_mha(cur, other, verify::attention_weights(s, "ctp.cross.t2_from_flair", 2))),
            1e-6);
}

TEST_F(CtpTest, AggregateIsTheSum) {
  const Var z = ag::constant(Tensor({2, 16}, 0.0));
  const Var f = ag::constant(random_tensor({2, 16}, rng));
  EXPECT_EQ(max_abs_diff(Ctp::aggregate(f, {z, z, z}).value(), f.value()), 0.0);
  const Tensor a = random_tensor({2, 16}, rng), b = random_tensor({2, 16}, rng), c = random_tensor({2, 16}, rng);
  const Tensor s = Ctp::aggregate(z, {ag::constant(a), ag::constant(b), ag::constant(c)}).value();
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s[i], a[i] + b[i] + c[i], 1e-15);
  EXPECT_THROW(Ctp::aggregate(f, {z, z}), ArityError);
}

TEST_F(CtpTest, RegionMapsFromZeroHeadAreUniform) {
  set_under(store, "ctp.flair.region_head", 0.0);
  const auto [features, maps] = ctp.generate_region_maps(0, ag::constant(random_tensor({8, 16}, rng)), {2, 2, 2}, false, rng);
  EXPECT_EQ(features.shape(), (Shape{16, 2, 2, 2}));
  for (double p : maps.value().values()) EXPECT_DOUBLE_EQ(p, 0.25);
  value_of(store, "ctp.flair.region_head.bias")[0] = 10.0;
  const auto [f2, m2] = ctp.generate_region_maps(0, ag::constant(random_tensor({8, 16}, rng)), {2, 2, 2}, false, rng);
  const double bg = std::exp(10.0) / (std::exp(10.0) + 3.0);
  for (int j = 0; j < 8; ++j) EXPECT_NEAR(m2.value()[j], bg, 1e-12);
  EXPECT_GT(bg, 0.9998);
}

TEST_F(CtpTest, PrototypeExamples) {
  const Tensor f = random_tensor({3, 2, 2, 2}, rng);
  const Tensor ones = Tensor::volume(1, {2, 2, 2}, 1.0);
  const Tensor mean = Ctp::compute_prototype(ag::constant(f), ag::constant(ones), false).value();
  for (int c = 0; c < 3; ++c) {
    double s = 0.0;
    for (int j = 0; j < 8; ++j) s += f[c * 8 + j];
    EXPECT_NEAR(mean[c], s / 8.0, 1e-15);
  }
  Tensor hot = Tensor::volume(1, {2, 2, 2}, 0.0);
  hot[5] = 1.0;
  const Tensor v = Ctp::compute_prototype(ag::constant(f), ag::constant(hot), false).value();
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(v[c], f[c * 8 + 5] / 8.0, 1e-15);
  const Tensor vm = Ctp::compute_prototype(ag::constant(f), ag::constant(hot), true).value();
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(vm[c], f[c * 8 + 5], 1e-6);

  const Tensor f2 = random_tensor({2, 2, 2, 2}, rng);
  Tensor p = random_tensor({1, 2, 2, 2}, rng);
  for (double& x : p.values()) x = 0.5 * (x + 1.0);
  EXPECT_LT(max_abs_diff(Ctp::compute_prototype(ag::constant(f2), ag::constant(p), false).value(),
                         verify::oracle_prototype(f2, p, false)),
            1e-15);
  EXPECT_THROW(Ctp::compute_prototype(ag::constant(f2), ag::constant(Tensor::volume(2, {2, 2, 2})), false), ShapeError);
}

TEST(CtpConfig, TokenWidthMustDivideHeads) {
  ModelConfig cfg = tiny(1);
  cfg.token_width = 12;
  nn::ParamStore store;
  Rng rng(0);
  EXPECT_THROW(Ctp(store, "ctp", cfg, rng), ConfigError);
}

// ---------------------------------------------------------------------------

class PfrfTest : public ::testing::Test {
 protected:
  PfrfTest() : rng(21), pfrf(store, "pfrf", cfg, rng) {}
  ModelConfig cfg = tiny(1);
  Rng rng;
  nn::ParamStore store;
  Pfrf pfrf;
};

TEST_F(PfrfTest, GateOfOneAndZero) {
  const Tensor f = random_tensor({16, 2, 2, 2}, rng);
  const Var proto = ag::constant(random_tensor({16}, rng));
  value_of(store, "pfrf.flair.drive_ncr.gate.weight").fill(0.0);
  value_of(store, "pfrf.flair.drive_ncr.gate.bias").fill(1.0);
  auto d = pfrf.drive_with_prototype(0, 0, ag::constant(f), proto);
  EXPECT_EQ(max_abs_diff(d.highlighted.value(), f), 0.0);
  value_of(store, "pfrf.flair.drive_ncr.gate.bias").fill(-1.0);
  d = pfrf.drive_with_prototype(0, 0, ag::constant(f), proto);
  for (double v : d.highlighted.value().values()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(pfrf.drive_with_prototype(0, 0, ag::constant(f), ag::constant(random_tensor({8}, rng))), ShapeError);
}

TEST_F(PfrfTest, ActivationIsNonnegativeAndGatesElementwise) {
  const Tensor f = random_tensor({16, 2, 2, 2}, rng);
  const auto d = pfrf.drive_with_prototype(2, 1, ag::constant(f), ag::constant(random_tensor({16}, rng)));
  const Tensor& a = d.activation.value();
  bool any_positive = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_GE(a[i], 0.0);
    any_positive = any_positive || a[i] > 0.0;
    EXPECT_DOUBLE_EQ(d.highlighted.value()[i], f[i] * a[i]);
  }
  EXPECT_TRUE(any_positive);
}

TEST_F(PfrfTest, AssembleIsLinearInZeroInputs) {
  set_under(store, "pfrf.t1.assemble", 0.0);
  for (auto [name, p] : store.under("pfrf.t1.assemble"))
    if (name.ends_with("weight")) p.mutable_value() = random_tensor(p.shape(), rng);
  const Var z = ag::constant(Tensor::volume(16, {2, 2, 2}, 0.0));
  const Tensor zeros = pfrf.assemble(2, {z, z, z}).value();
  for (double v : zeros.values()) EXPECT_EQ(v, 0.0);

  std::array<Tensor, 3> h{random_tensor({16, 2, 2, 2}, rng), random_tensor({16, 2, 2, 2}, rng),
                          random_tensor({16, 2, 2, 2}, rng)};
  Tensor cat({48, 2, 2, 2});
  for (int r = 0; r < 3; ++r)
    for (std::size_t i = 0; i < h[r].size(); ++i) cat[r * h[r].size() + i] = h[r][i];
  const Tensor want = verify::oracle_conv3d(
      verify::oracle_conv3d(cat, value_of(store, "pfrf.t1.assemble.spatial.weight"), value_of(store, "pfrf.t1.assemble.spatial.bias"), 1),
      value_of(store, "pfrf.t1.assemble.mix.weight"), value_of(store, "pfrf.t1.assemble.mix.bias"), 1);
  EXPECT_LT(max_abs_diff(pfrf.assemble(2, {ag::constant(h[0]), ag::constant(h[1]), ag::constant(h[2])}).value(), want),
            1e-12);
}

TEST_F(PfrfTest, FusionOfSingleTokenAndSymmetricInputs) {
  std::array<Tensor, 4> m;
  std::array<Var, 4> v;
  for (int i = 0; i < 4; ++i) {
    m[i] = random_tensor({16, 1, 1, 1}, rng);
    v[i] = ag::constant(m[i]);
  }
  const auto w = verify::attention_weights(store, "pfrf.fusion", cfg.heads);
  const Tensor tokens = verify::oracle_tokens(verify::oracle_fuse(m, w, false));
  Tensor cat({1, 64});
  for (int i = 0; i < 4; ++i)
    for (int c = 0; c < 16; ++c) cat[i * 16 + c] = m[i][c];
  const Tensor vpath = verify::oracle_linear(
      verify::oracle_linear(verify::oracle_layer_norm(cat, w.gamma_kv, w.beta_kv), w.wv, Tensor()), w.wo, w.bo);
  EXPECT_LT(max_abs_diff(tokens, vpath), 1e-12);
  const Tensor fused = pfrf.fuse(v).value();
  for (int c = 0; c < 64; ++c) EXPECT_NEAR(fused[c], cat[c] + vpath[c], 1e-12);

  Tensor same = Tensor::volume(16, {2, 2, 2});
  for (int c = 0; c < 16; ++c)
    for (int j = 0; j < 8; ++j) same[c * 8 + j] = 0.05 * c;
  const Var s = ag::constant(same);
  const Tensor out = pfrf.fuse({s, s, s, s}).value();
  for (int c = 0; c < 64; ++c)
    for (int j = 1; j < 8; ++j) EXPECT_NEAR(out[c * 8 + j], out[c * 8], 1e-12);
}

// ---------------------------------------------------------------------------

TEST(Kiimi, ExpertHeadsAndIntegration) {
  const ModelConfig cfg = tiny(1);
  nn::ParamStore store;
  Rng rng(31);
  const Kiimi k(store, "kiimi", cfg, rng);
  const Tensor f = random_tensor({2, 4, 4, 4}, rng);

  EXPECT_LT(max_sum_deviation(k.expert_region_maps(2, ag::constant(f)).value()), 1e-12);
  set_under(store, "kiimi.level2.classify", 0.0);
  {
    const Tensor m = k.expert_region_maps(2, ag::constant(f)).value();
    for (double p : m.values()) EXPECT_DOUBLE_EQ(p, 0.25);
  }
  EXPECT_THROW(k.expert_region_maps(5, ag::constant(f)), LevelError);
  EXPECT_THROW(k.expert_region_maps(0, ag::constant(f)), LevelError);

  set_under(store, "kiimi.level2.integrate.spatial.bias", 0.0);
  set_under(store, "kiimi.level2.integrate.restore.bias", 0.0);
  const Tensor zero_maps = Tensor::volume(4, {4, 4, 4}, 0.0);
  {
    const Tensor o = k.integrate(2, ag::constant(f), ag::constant(zero_maps)).value();
    for (double v : o.values()) EXPECT_EQ(v, 0.0);
  }

  const Tensor quarter = Tensor::volume(4, {4, 4, 4}, 0.25);
  const Tensor got = k.integrate(2, ag::constant(f), ag::constant(quarter)).value();
  const Tensor want = verify::oracle_integrate(
      f, quarter, value_of(store, "kiimi.level2.integrate.spatial.weight"), value_of(store, "kiimi.level2.integrate.spatial.bias"),
      value_of(store, "kiimi.level2.integrate.restore.weight"), value_of(store, "kiimi.level2.integrate.restore.bias"));
  EXPECT_LT(max_abs_diff(got, want), 1e-12);
  EXPECT_THROW(k.integrate(2, ag::constant(f), ag::constant(Tensor::volume(4, {2, 2, 2}))), ShapeError);
}

TEST(Kiimi, SkipConcatenatesFiveMaps) {
  Rng rng(0);
  std::array<Var, 4> feats;
  for (auto& f : feats) f = ag::constant(random_tensor({4, 2, 2, 2}, rng));
  const Var e = ag::constant(random_tensor({4, 2, 2, 2}, rng));
  EXPECT_EQ(Kiimi::build_skip(1, feats, e).value().channels(), 20);
  EXPECT_THROW(Kiimi::build_skip(5, feats, e), LevelError);
  EXPECT_THROW(Kiimi::build_skip(1, feats, ag::constant(random_tensor({4, 4, 2, 2}, rng))), ShapeError);
}

// ---------------------------------------------------------------------------

TEST(NetworkVariants, BaselineHasNoPrototypeModules) {
  ModelConfig cfg = tiny(1);
  cfg.full_model = false;
  const Network net(cfg);
  EXPECT_TRUE(net.params().under("ctp.").empty());
  EXPECT_TRUE(net.params().under("kiimi.").empty());
  EXPECT_TRUE(net.params().under("decoder.share.").empty());
  Rng rng(1);
  const auto out = net.forward(ag::constant(random_tensor({4, 16, 16, 16}, rng)), true, rng);
  EXPECT_FALSE(out.ctp.prototypes[0][0].defined());
  EXPECT_EQ(out.segmentation.probabilities.shape(), (Shape{4, 16, 16, 16}));
  const auto c = verify::phantom_cases(1, 16, 0).front();
  const auto l = loss::compute_losses(net.forward(ag::constant(data::case_to_tensor(c)), true, rng), *c.labels, {}, false);
  EXPECT_EQ(l.total.value().item(), l.deep_supervision.value().item());
}

TEST(NetworkVariants, ShapeContractAt32) {
  const auto r = verify::shape_suite({}, 32, 4);
  for (const auto& c : r) EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;
}
