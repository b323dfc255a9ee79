#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "protoseg/core/error.hpp"
#include "protoseg/data/augment.hpp"
#include "protoseg/train/checkpoint.hpp"
#include "protoseg/train/inference.hpp"
#include "protoseg/train/trainer.hpp"
#include "protoseg/verify/suites.hpp"

using namespace protoseg;
using namespace protoseg::train;
using ag::Var;
namespace fs = std::filesystem;

namespace {

TrainConfig small_config(std::uint64_t seed = 3) {
  TrainConfig c;
  c.model.base_channels = 1;
  c.model.init_seed = seed;
  c.crop = {16, 16, 16};
  c.total_epochs = 4;
  c.seed = seed;
  c.base_lr = 1e-3;
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("protoseg_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<char>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

bool same_parameters(const nn::ParamStore& a, const nn::ParamStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (max_abs_diff(a.entries()[i].second.value(), b.entries()[i].second.value()) != 0.0) return false;
  return true;
}

}  // namespace

TEST(PolyLr, Values) {
  TrainConfig c;
  c.total_epochs = 2000;
  EXPECT_EQ(poly_lr(0, c), 2e-4);
  EXPECT_EQ(poly_lr(2000, c), 0.0);
  EXPECT_NEAR(poly_lr(1000, c), 2e-4 * std::pow(0.5, 0.9), 1e-18);
  EXPECT_NEAR(poly_lr(1000, c), 1.0718e-4, 1e-8);
  for (int e = 1; e <= 2000; ++e) ASSERT_LT(poly_lr(e, c), poly_lr(e - 1, c));
  EXPECT_THROW(poly_lr(-1, c), RangeError);
  EXPECT_THROW(poly_lr(2001, c), RangeError);
}

TEST(Adam, ScalarMatchesTextbookUpdate) {
  nn::ParamStore store;
  Var x = store.constant("x", {1}, 0.5);
  TrainConfig c;
  c.weight_decay = 0.0;
  AdamState s;
  const double grads[3] = {0.3, -0.1, 0.7};
  double m = 0.0, v = 0.0, theta = 0.5;
  for (int t = 1; t <= 3; ++t) {
    x.zero_grad();
    x.mutable_grad()[0] = grads[t - 1];
    adam_update(store, s, c, 1e-2);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    const double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
    theta -= 1e-2 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(x.value()[0], theta, 1e-15);
    EXPECT_NEAR(s.m[0][0], m, 1e-16);
    EXPECT_NEAR(s.v[0][0], v, 1e-16);
  }
  EXPECT_EQ(s.t, 3);
}

TEST(Adam, WeightDecayVariants) {
  for (bool decoupled : {true, false}) {
    nn::ParamStore store;
    Var x = store.constant("x", {1}, 2.0);
    TrainConfig c;
    c.weight_decay = 0.1;
    c.decoupled_weight_decay = decoupled;
    AdamState s;
    x.zero_grad();
    x.mutable_grad()[0] = 0.0;
    adam_update(store, s, c, 1e-2);
    // First Adam step moves by lr * sign(g) when g != 0.
    const double want = decoupled ? 2.0 - 1e-2 * 0.1 * 2.0 : 2.0 - 1e-2;
    EXPECT_NEAR(x.value()[0], want, 1e-9) << decoupled;
  }
}

TEST(Adam, GradientNorm) {
  nn::ParamStore store;
  Var a = store.constant("a", {2}, 0.0), b = store.constant("b", {1}, 0.0);
  a.mutable_grad()[0] = 3.0;
  b.mutable_grad()[0] = 4.0;
  EXPECT_DOUBLE_EQ(gradient_norm(store), 5.0);
}

TEST(TrainStep, ZeroLearningRateLeavesParametersBitIdentical) {
  const TrainConfig c = small_config();
  TrainState s(c);
  TrainState ref(c);
  const auto cases = verify::phantom_cases(1, 16, 1);
  const StepRecord r = train_step(s, cases, c, 0.0);
  EXPECT_TRUE(std::isfinite(r.total));
  EXPECT_GT(r.grad_norm, 0.0);
  EXPECT_TRUE(same_parameters(s.network.params(), ref.network.params()));
  EXPECT_EQ(s.step, 1);
  const std::string line = format_record(r);
  std::size_t last = 0;
  for (const char* key : {"\"step\"", "\"epoch\"", "\"lr\"", "\"L_ctp\"", "\"L_share\"", "\"L_exp\"", "\"L_deep\"",
                          "\"L_total\"", "\"grad_norm\"", "\"clipped\""}) {
    const std::size_t at = line.find(key);
    ASSERT_NE(at, std::string::npos) << key;
    EXPECT_GE(at, last) << key;
    last = at;
  }
  const auto j = nlohmann::json::parse(line);
  EXPECT_NEAR(j["L_total"].get<double>(), r.ctp + r.share + r.expert + r.deep_supervision, 1e-9);
}

TEST(TrainStep, GradientClippingIsReported) {
  TrainConfig c = small_config();
  c.grad_clip_norm = 1e-6;
  TrainState s(c);
  const StepRecord r = train_step(s, verify::phantom_cases(1, 16, 1), c, 1e-3);
  EXPECT_TRUE(r.clipped);
  EXPECT_NEAR(gradient_norm(s.network.params()), 1e-6, 1e-12);
}

TEST(TrainStep, NonFiniteLossLeavesStateUntouched) {
  const TrainConfig c = small_config();
  TrainState s(c);
  TrainState ref(c);
  auto cases = verify::phantom_cases(1, 16, 1);
  cases[0].volumes[0].voxels[10] = std::nan("");
  EXPECT_THROW(train_step(s, cases, c, 1e-3), NonFiniteLoss);
  EXPECT_TRUE(same_parameters(s.network.params(), ref.network.params()));
  EXPECT_EQ(s.step, 0);
}

TEST(Trainer, DeterministicAcrossFreshRuns) {
  const auto cases = verify::phantom_cases(2, 16, 4);
  Trainer a(small_config(), cases), b(small_config(), cases);
  EXPECT_EQ(a.steps_per_epoch(), 2);
  EXPECT_EQ(a.total_steps(), 8);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(a.step().total, b.step().total, 1e-6);
  EXPECT_TRUE(same_parameters(a.state().network.params(), b.state().network.params()));
}

TEST(Trainer, FinishesAfterTotalSteps) {
  TrainConfig c = small_config();
  c.total_epochs = 1;
  Trainer t(c, verify::phantom_cases(2, 16, 4));
  t.step();
  EXPECT_FALSE(t.finished());
  const StepRecord r = t.step();
  EXPECT_EQ(r.lr, poly_lr(0, c));
  EXPECT_TRUE(t.finished());
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  const fs::path dir = scratch_dir("resume");
  const auto cases = verify::phantom_cases(2, 16, 5);
  Trainer full(small_config(), cases);
  std::vector<double> reference;
  for (int i = 0; i < 5; ++i) reference.push_back(full.step().total);

  Trainer first(small_config(), cases);
  for (int i = 0; i < 3; ++i) first.step();
  first.save_checkpoint(dir / "mid.ckpt");
  Trainer resumed(small_config(), cases);
  resumed.load_checkpoint(dir / "mid.ckpt");
  EXPECT_EQ(resumed.state().step, 3);
  EXPECT_EQ(resumed.state().epoch, first.state().epoch);
  EXPECT_TRUE(resumed.state().data_rng == first.state().data_rng);
  EXPECT_TRUE(resumed.state().dropout_rng == first.state().dropout_rng);
  EXPECT_TRUE(same_parameters(resumed.state().network.params(), first.state().network.params()));
  EXPECT_EQ(resumed.state().adam.t, first.state().adam.t);
  for (int i = 3; i < 5; ++i) EXPECT_NEAR(resumed.step().total, reference[static_cast<std::size_t>(i)], 1e-6);
  for (std::size_t i = 0; i < full.state().network.params().size(); ++i)
    EXPECT_EQ(max_abs_diff(resumed.state().network.params().entries()[i].second.value(), full.state().network.params().entries()[i].second.value()), 0.0) << full.state().network.params().entries()[i].first;
}

TEST(Checkpoint, CorruptionAndVersionErrors) {
  const fs::path dir = scratch_dir("corrupt");
  const TrainConfig c = small_config();
  TrainState s(c);
  save_checkpoint(dir / "a.ckpt", s, c);
  const auto good = read_bytes(dir / "a.ckpt");
  EXPECT_NO_THROW(read_checkpoint(dir / "a.ckpt"));

  auto flipped = good;
  flipped[flipped.size() / 2] ^= 0x10;
  write_bytes(dir / "b.ckpt", flipped);
  EXPECT_THROW(read_checkpoint(dir / "b.ckpt"), CheckpointCorrupt);

  auto truncated = good;
  truncated.resize(truncated.size() - 100);
  write_bytes(dir / "c.ckpt", truncated);
  EXPECT_THROW(read_checkpoint(dir / "c.ckpt"), CheckpointCorrupt);

  auto future = good;
  future[8] = 7;
  write_bytes(dir / "d.ckpt", future);
  EXPECT_THROW(read_checkpoint(dir / "d.ckpt"), CheckpointVersionError);

  write_bytes(dir / "e.ckpt", {'n', 'o', 'p', 'e'});
  EXPECT_THROW(read_checkpoint(dir / "e.ckpt"), CheckpointCorrupt);

  // A failed load leaves the live state alone.
  TrainState other(small_config(9));
  TrainState before(small_config(9));
  EXPECT_THROW(restore_state(read_checkpoint(dir / "b.ckpt"), other, small_config(9)), CheckpointCorrupt);
  EXPECT_TRUE(same_parameters(other.network.params(), before.network.params()));
}

TEST(Checkpoint, ArchitectureMismatchIsRejected) {
  const fs::path dir = scratch_dir("mismatch");
  const TrainConfig c = small_config();
  TrainState s(c);
  save_checkpoint(dir / "a.ckpt", s, c);
  TrainConfig wider = c;
  wider.model.base_channels = 2;
  TrainState w(wider);
  TrainState before(wider);
  EXPECT_THROW(restore_state(read_checkpoint(dir / "a.ckpt"), w, wider), ConfigMismatch);
  EXPECT_TRUE(same_parameters(w.network.params(), before.network.params()));
  EXPECT_THROW(load_parameters(read_checkpoint(dir / "a.ckpt"), w.network), ConfigMismatch);

  TrainConfig loaded;
  const model::Network net = load_network(dir / "a.ckpt", &loaded);
  EXPECT_EQ(loaded.model.base_channels, 1);
  EXPECT_TRUE(same_parameters(net.params(), s.network.params()));
}

TEST(Inference, TtaIsANormalizedAverage) {
  model::ModelConfig m;
  m.base_channels = 1;
  const model::Network net(m);
  const auto c = verify::phantom_cases(1, 16, 6).front();
  const Tensor x = data::case_to_tensor(c);
  const Tensor plain = infer_probabilities(net, x, false);
  const Tensor tta = infer_probabilities(net, x, true);
  EXPECT_EQ(max_abs_diff(plain, net.predict(x)), 0.0);
  const std::size_t n = tta.spatial_size();
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (int k = 0; k < 4; ++k) s += tta[k * n + j];
    ASSERT_NEAR(s, 1.0, 1e-12);
  }
  Tensor mean(tta.shape());
  for (int mask = 0; mask < 8; ++mask) {
    const std::array<bool, 3> axes{(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0};
    const Tensor out = data::flip_tensor(net.predict(data::flip_tensor(x, axes)), axes);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += out[i] / 8.0;
  }
  EXPECT_LT(max_abs_diff(mean, tta), 1e-12);
}

TEST(Inference, TtaEqualsPlainForFlipInvariantOutput) {
  model::ModelConfig m;
  m.base_channels = 1;
  const model::Network net(m);
  // Zero weights in the final head: every voxel gets softmax(bias), whatever the input.
  for (auto [name, p] : net.params().under("decoder.seg.block1.head"))
    if (name.ends_with("weight")) p.mutable_value().fill(0.0);
  const Tensor x = data::case_to_tensor(verify::phantom_cases(1, 16, 6).front());
  EXPECT_LT(max_abs_diff(infer_probabilities(net, x, true), infer_probabilities(net, x, false)), 1e-15);
}

TEST(Inference, WindowOrigins) {
  EXPECT_EQ(window_origins(32, 32), (std::vector<int>{0}));
  EXPECT_EQ(window_origins(20, 32), (std::vector<int>{0}));
  EXPECT_EQ(window_origins(64, 32), (std::vector<int>{0, 16, 32}));
  EXPECT_EQ(window_origins(40, 32), (std::vector<int>{0, 8}));
  EXPECT_EQ(window_origins(50, 16), (std::vector<int>{0, 8, 16, 24, 32, 34}));
}

TEST(Inference, SlidingWindow) {
  model::ModelConfig m;
  m.base_channels = 1;
  const model::Network net(m);
  const auto c = verify::phantom_cases(1, 16, 7).front();
  const Tensor x = data::case_to_tensor(c);
  EXPECT_EQ(max_abs_diff(sliding_window_probabilities(net, x, {16, 16, 16}, false), net.predict(x)), 0.0);

  Tensor big = Tensor::volume(4, {16, 24, 16});
  for (int ch = 0; ch < 4; ++ch)
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 24; ++j)
        for (int k = 0; k < 16; ++k) big[((static_cast<std::size_t>(ch) * 16 + i) * 24 + j) * 16 + k] = x[((static_cast<std::size_t>(ch) * 16 + i) * 16 + j % 16) * 16 + k];
  const Tensor p = sliding_window_probabilities(net, big, {16, 16, 16}, false);
  EXPECT_EQ(p.shape(), (Shape{4, 16, 24, 16}));
  const std::size_t n = p.spatial_size();
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (int k = 0; k < 4; ++k) s += p[k * n + j];
    ASSERT_NEAR(s, 1.0, 1e-12);
  }
  const auto labels = segment_case(net, c, {16, 16, 16}, false);
  EXPECT_EQ(labels.dims, c.dims());
  for (auto l : labels.values) EXPECT_LE(l, 3);
}
