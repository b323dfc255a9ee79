#include "protoseg/verify/suites.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "protoseg/core/error.hpp"
#include "protoseg/data/phantom.hpp"
#include "protoseg/loss/losses.hpp"
#include "protoseg/metrics/metrics.hpp"
#include "protoseg/model/network.hpp"
#include "protoseg/train/inference.hpp"
#include "protoseg/train/trainer.hpp"
#include "protoseg/verify/gradcheck.hpp"
#include "protoseg/verify/oracles.hpp"

namespace protoseg::verify {
namespace {

using ag::Var;
using Wrt = std::vector<std::pair<std::string, Var>>;

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& x : t.values()) x = rng.uniform(lo, hi);
  return t;
}

Var random_param(Shape shape, Rng& rng) { return ag::parameter(random_tensor(std::move(shape), rng)); }

Tensor random_probabilities(int channels, Dims3 dims, Rng& rng) {
  Tensor t = Tensor::volume(channels, dims);
  const std::size_t n = dims.size();
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (int c = 0; c < channels; ++c) s += (t[c * n + j] = std::exp(rng.uniform(-2.0, 2.0)));
    for (int c = 0; c < channels; ++c) t[c * n + j] /= s;
  }
  return t;
}

data::LabelVolume random_labels(Dims3 dims, Rng& rng) {
  data::LabelVolume l{dims, std::vector<std::uint8_t>(dims.size())};
  for (auto& v : l.values) v = static_cast<std::uint8_t>(rng.below(4));
  return l;
}

Var probe(const Var& y, std::uint64_t seed) {
  Rng rng(seed);
  return ag::sum(ag::mul(y, ag::constant(random_tensor(y.shape(), rng))));
}

Wrt with(Wrt base, const Wrt& more) {
  base.insert(base.end(), more.begin(), more.end());
  return base;
}

CheckResult bound_check(const std::string& suite, const std::string& name, double value, double tolerance,
                        std::string detail = {}) {
  return {suite, name, value <= tolerance && std::isfinite(value), value, tolerance, std::move(detail)};
}

model::ModelConfig tiny_config(std::uint64_t seed) {
  model::ModelConfig cfg;
  cfg.base_channels = 1;
  cfg.init_seed = seed;
  return cfg;
}

}  // namespace

std::vector<data::MultiModalCase> phantom_cases(int count, int grid, std::uint64_t seed, double noise) {
  data::PhantomSpec spec = data::default_phantom_spec(grid, seed);
  spec.noise_sigma = noise;
  auto raw = data::generate_phantom_set(spec, count);
  std::vector<data::MultiModalCase> out;
  for (const auto& c : raw) out.push_back(data::normalize_case(c));
  return out;
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"gradient", "oracle", "metrics", "normalization", "shape", "determinism"};
  return names;
}

std::vector<CheckResult> run_suite(const std::string& name, const SuiteOptions& o) {
  if (name == "gradient") return gradient_suite(o);
  if (name == "oracle") return oracle_suite(o);
  if (name == "metrics") return metrics_suite(o);
  if (name == "normalization") return normalization_suite(o);
  if (name == "shape") return shape_suite(o);
  if (name == "determinism") return determinism_suite(o);
  throw ConfigError("unknown suite '" + name + "'");
}

std::vector<CheckResult> gradient_suite(const SuiteOptions& o) {
  constexpr double kTol = 1e-4;
  std::vector<CheckResult> out;
  GradCheckOptions gopt;
  gopt.max_entries = 0;
  gopt.seed = o.seed;
  auto run = [&](const std::string& name, const std::function<Var()>& f, const Wrt& wrt) {
    const auto entries = gradcheck(f, wrt, gopt);
    std::string worst_name;
    double worst = 0.0;
    for (const auto& e : entries)
      if (!(e.rel_error <= worst)) {
        worst = e.rel_error;
        worst_name = e.name;
      }
    out.push_back(bound_check("gradient", name, worst, kTol, "worst tensor " + worst_name));
  };

  Rng rng(o.seed + 17);
  const model::ModelConfig cfg = tiny_config(o.seed);
  const int tw = cfg.resolved_token_width();
  const Dims3 g2{2, 2, 2};  // 8 tokens

  {
    nn::ParamStore store;
    nn::ConvUnit down(store, "block.unit0", 2, 3, 2, cfg.negative_slope, rng);
    nn::ConvUnit same(store, "block.unit1", 3, 3, 1, cfg.negative_slope, rng);
    const Var x = random_param({2, 4, 4, 4}, rng);
    run("encoder_block", [&] { return probe(same(down(x)), 1); }, with({{"x", x}}, store.entries()));
  }

  nn::ParamStore store;
  model::Ctp ctp(store, "ctp", cfg, rng);
  ctp.inject_cross_attention_fault = o.inject_cross_attention_fault;
  model::Pfrf pfrf(store, "pfrf", cfg, rng);
  model::Kiimi kiimi(store, "kiimi", cfg, rng);

  {
    const Var f = random_param({cfg.width(model::kNumLevels), 2, 2, 2}, rng);
    run("self_attend", [&] { return probe(ctp.self_attend(0, f), 2); },
        with({{"feature", f}}, with(store.under("ctp.flair.project"), store.under("ctp.flair.self_attention"))));
  }
  {
    const Var cur = random_param({8, tw}, rng), oth = random_param({8, tw}, rng);
    run("cross_attend", [&] { return probe(ctp.cross_attend(1, 2, cur, oth), 3); },
        with({{"current", cur}, {"other", oth}}, store.under("ctp.cross.t1c_from_t1.")));
  }
  {
    const Var a = random_param({8, tw}, rng), b = random_param({8, tw}, rng), c = random_param({8, tw}, rng),
              d = random_param({8, tw}, rng);
    run("aggregate_interaction", [&] { return probe(model::Ctp::aggregate(a, {b, c, d}), 4); },
        {{"current", a}, {"c1", b}, {"c2", c}, {"c3", d}});
  }
  {
    const Var t = random_param({8, tw}, rng);
    run("generate_region_maps",
        [&] {
          Rng drop(o.seed + 5);
          auto [features, maps] = ctp.generate_region_maps(2, t, g2, true, drop);
          return ag::add(probe(features, 5), probe(maps, 6));
        },
        with({{"interacted", t}}, with(store.under("ctp.t1.ffn"), store.under("ctp.t1.region_head"))));
  }
  for (bool masked : {false, true}) {
    const Var f = random_param({tw, 2, 2, 2}, rng);
    const Var p = ag::parameter(random_probabilities(1, g2, rng));
    for (double& v : p.node()->value.values()) v = 0.2 + 0.6 * v;
    run(masked ? "compute_prototype_masked" : "compute_prototype",
        [&] { return probe(model::Ctp::compute_prototype(f, p, masked), 7); }, {{"features", f}, {"map", p}});
  }
  {
    const Var f = random_param({tw, 2, 2, 2}, rng), proto = random_param({tw}, rng);
    run("drive_with_prototype",
        [&] {
          const auto d = pfrf.drive_with_prototype(3, 1, f, proto);
          return ag::add(probe(d.activation, 8), probe(d.highlighted, 9));
        },
        with({{"features", f}, {"prototype", proto}}, store.under("pfrf.t2.drive_ed")));
  }
  {
    const std::array<Var, 3> h{random_param({tw, 2, 2, 2}, rng), random_param({tw, 2, 2, 2}, rng),
                               random_param({tw, 2, 2, 2}, rng)};
    run("assemble", [&] { return probe(pfrf.assemble(0, h), 10); },
        with({{"h_ncr", h[0]}, {"h_ed", h[1]}, {"h_et", h[2]}}, store.under("pfrf.flair.assemble")));
  }
  {
    const int w5 = cfg.width(model::kNumLevels);
    const std::array<Var, 4> m{random_param({w5, 2, 2, 2}, rng), random_param({w5, 2, 2, 2}, rng),
                               random_param({w5, 2, 2, 2}, rng), random_param({w5, 2, 2, 2}, rng)};
    run("fuse_modalities", [&] { return probe(pfrf.fuse(m), 11); },
        with({{"flair", m[0]}, {"t1c", m[1]}, {"t1", m[2]}, {"t2", m[3]}}, store.under("pfrf.fusion")));
  }
  for (int level = 1; level <= 4; ++level) {
    const std::string p = "kiimi.level" + std::to_string(level);
    const Var f = random_param({cfg.width(level), 3, 3, 3}, rng);
    run("expert_region_maps_level" + std::to_string(level),
        [&] { return probe(kiimi.expert_region_maps(level, f), 12); },
        with({{"feature", f}}, store.under(p + ".classify")));
    const Var maps = ag::parameter(random_probabilities(4, {3, 3, 3}, rng));
    run("expert_integrate_level" + std::to_string(level), [&] { return probe(kiimi.integrate(level, f, maps), 13); },
        with({{"feature", f}, {"maps", maps}}, store.under(p + ".integrate")));
  }

  // Losses on probability fields parameterized by logits.
  loss::LossConfig lc;
  const Dims3 g4{4, 4, 4};
  const data::LabelVolume truth = random_labels(g4, rng);
  const std::array<double, 4> weights{0.5, 2.0, 1.5, 1.0};
  const Var logits = random_param({4, 2, 1, 1}, rng);
  const data::LabelVolume tiny_truth{{2, 1, 1}, {1, 3}};
  for (bool squared : {true, false}) {
    loss::LossConfig c = lc;
    c.dice_squared_denominator = squared;
    run(squared ? "dice_loss" : "dice_loss_plain_denominator",
        [&] { return loss::dice_loss(ag::softmax_channels(logits), data::one_hot(tiny_truth), c); }, {{"logits", logits}});
  }
  run("weighted_ce", [&] { return loss::weighted_ce(ag::softmax_channels(logits), data::one_hot(tiny_truth), lc, weights); },
      {{"logits", logits}});
  std::vector<Var> coarse, full, ladder;
  for (int i = 0; i < 4; ++i) coarse.push_back(random_param({4, 2, 2, 2}, rng));
  for (int i = 0; i < 5; ++i) full.push_back(random_param({4, 4, 4, 4}, rng));
  for (int i = 0; i < 5; ++i) {
    const int n = std::max(1, 4 >> i);
    ladder.push_back(random_param({4, n, n, n}, rng));
  }
  auto softmax_all = [](const std::vector<Var>& xs, std::size_t count) {
    std::vector<Var> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(ag::softmax_channels(xs[i]));
    return out;
  };
  auto named = [](const std::string& p, const std::vector<Var>& xs) {
    Wrt w;
    for (std::size_t i = 0; i < xs.size(); ++i) w.emplace_back(p + std::to_string(i), xs[i]);
    return w;
  };
  run("ctp_loss", [&] { return loss::ctp_loss(softmax_all(coarse, 4), truth, lc, weights); }, named("map", coarse));
  run("share_loss", [&] { return loss::share_loss(softmax_all(full, 5), truth, lc, weights); }, named("pred", full));
  run("expert_loss", [&] { return loss::expert_loss(softmax_all(ladder, 4), truth, lc, weights); },
      named("map", {ladder.begin(), ladder.begin() + 4}));
  run("deep_supervision_loss", [&] { return loss::deep_supervision_loss(softmax_all(ladder, 5), truth, lc, weights); },
      named("block", ladder));
  run("total_loss",
      [&] {
        return loss::total_loss({loss::ctp_loss(softmax_all(coarse, 4), truth, lc, weights),
                                 loss::share_loss(softmax_all(full, 5), truth, lc, weights),
                                 loss::expert_loss(softmax_all(ladder, 4), truth, lc, weights),
                                 loss::deep_supervision_loss(softmax_all(ladder, 5), truth, lc, weights)});
      },
      with(named("map", coarse), with(named("pred", full), named("block", ladder))));
  return out;
}

std::vector<CheckResult> oracle_suite(const SuiteOptions& o) {
  constexpr double kTol = 1e-6;
  std::vector<CheckResult> out;
  Rng rng(o.seed + 101);
  double self_err = 0.0, cross_err = 0.0, fuse_err = 0.0, proto_err = 0.0, integ_err = 0.0;
  for (int i = 0; i < o.instances; ++i) {
    model::ModelConfig cfg = tiny_config(o.seed + static_cast<std::uint64_t>(i));
    cfg.fusion_residual = rng.bernoulli(0.5);
    cfg.prototype_masked_average = rng.bernoulli(0.5);
    Rng init(cfg.init_seed);
    nn::ParamStore store;
    model::Ctp ctp(store, "ctp", cfg, init);
    model::Pfrf pfrf(store, "pfrf", cfg, init);
    model::Kiimi kiimi(store, "kiimi", cfg, init);
    const Dims3 grid{1 + static_cast<int>(rng.below(2)), 1 + static_cast<int>(rng.below(2)),
                     1 + static_cast<int>(rng.below(2))};
    const int w5 = cfg.width(model::kNumLevels), tw = cfg.resolved_token_width();

    const int m = static_cast<int>(rng.below(4));
    const char* names[4] = {"flair", "t1c", "t1", "t2"};
    const Tensor feat = random_tensor({w5, grid.h, grid.w, grid.d}, rng);
    {
      ag::NoGradGuard ng;
      const Tensor got = ctp.self_attend(m, ag::constant(feat)).value();
      const std::string p = std::string("ctp.") + names[m];
      const Tensor want = oracle_self_attend(feat, store.at(p + ".project.weight").value(),
                                             store.at(p + ".project.bias").value(),
                                             attention_weights(store, p + ".self_attention", cfg.heads));
      self_err = std::max(self_err, max_abs_diff(got, want));
    }
    {
      const int c = static_cast<int>(rng.below(4));
      const int oth = (c + 1 + static_cast<int>(rng.below(3))) % 4;
      const int n = static_cast<int>(grid.size());
      const Tensor cur = random_tensor({n, tw}, rng), other = random_tensor({n, tw}, rng);
      ag::NoGradGuard ng;
      const Tensor got = ctp.cross_attend(c, oth, ag::constant(cur), ag::constant(other)).value();
      const Tensor want = oracle_mha(
          cur, other, attention_weights(store, std::string("ctp.cross.") + names[c] + "_from_" + names[oth], cfg.heads));
      cross_err = std::max(cross_err, max_abs_diff(got, want));
    }
    {
      std::array<Tensor, 4> modal;
      std::array<Var, 4> vars;
      for (int k = 0; k < 4; ++k) {
        modal[k] = random_tensor({w5, grid.h, grid.w, grid.d}, rng);
        vars[k] = ag::constant(modal[k]);
      }
      ag::NoGradGuard ng;
      const Tensor got = pfrf.fuse(vars).value();
      const Tensor want = oracle_fuse(modal, attention_weights(store, "pfrf.fusion", cfg.heads), cfg.fusion_residual);
      fuse_err = std::max(fuse_err, max_abs_diff(got, want));
    }
    {
      const Dims3 g{1 + static_cast<int>(rng.below(4)), 1 + static_cast<int>(rng.below(4)),
                    1 + static_cast<int>(rng.below(4))};
      const Tensor f = random_tensor({tw, g.h, g.w, g.d}, rng);
      const Tensor p = random_probabilities(4, g, rng);
      Tensor region({1, g.h, g.w, g.d});
      const int r = 1 + static_cast<int>(rng.below(3));
      for (std::size_t j = 0; j < g.size(); ++j) region[j] = p[r * g.size() + j];
      ag::NoGradGuard ng;
      const Tensor got =
          model::Ctp::compute_prototype(ag::constant(f), ag::constant(region), cfg.prototype_masked_average).value();
      proto_err = std::max(proto_err, max_abs_diff(got, oracle_prototype(f, region, cfg.prototype_masked_average)));
    }
    {
      const int level = 1 + static_cast<int>(rng.below(4));
      const Dims3 g{2 + static_cast<int>(rng.below(3)), 2 + static_cast<int>(rng.below(3)),
                    2 + static_cast<int>(rng.below(3))};
      const Tensor f = random_tensor({cfg.width(level), g.h, g.w, g.d}, rng);
      const Tensor maps = random_probabilities(4, g, rng);
      ag::NoGradGuard ng;
      const Tensor got = kiimi.integrate(level, ag::constant(f), ag::constant(maps)).value();
      const std::string p = "kiimi.level" + std::to_string(level) + ".integrate";
      const Tensor want = oracle_integrate(f, maps, store.at(p + ".spatial.weight").value(),
                                           store.at(p + ".spatial.bias").value(), store.at(p + ".restore.weight").value(),
                                           store.at(p + ".restore.bias").value());
      integ_err = std::max(integ_err, max_abs_diff(got, want));
    }
  }
  const std::string n = std::to_string(o.instances) + " instances";
  out.push_back(bound_check("oracle", "self_attention", self_err, kTol, n));
  out.push_back(bound_check("oracle", "cross_attention", cross_err, kTol, n));
  out.push_back(bound_check("oracle", "fusion_attention", fuse_err, kTol, n));
  out.push_back(bound_check("oracle", "prototype", proto_err, kTol, n));
  out.push_back(bound_check("oracle", "expert_integration", integ_err, kTol, n));
  return out;
}

std::vector<CheckResult> metrics_suite(const SuiteOptions& o) {
  std::vector<CheckResult> out;
  Rng rng(o.seed + 303);
  double dice_err = 0.0, hd_err = 0.0;
  int empty_cases = 0;
  for (int i = 0; i < o.instances; ++i) {
    const Dims3 d{3 + static_cast<int>(rng.below(6)), 3 + static_cast<int>(rng.below(6)),
                  3 + static_cast<int>(rng.below(6))};
    const std::array<double, 3> sp{rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)};
    auto make = [&](double density) {
      metrics::BinaryMask m{d, std::vector<std::uint8_t>(d.size()), sp};
      for (auto& v : m.values) v = rng.bernoulli(density) ? 1 : 0;
      return m;
    };
    const double da = i % 10 == 0 ? 0.0 : rng.uniform(0.05, 0.7);
    const double db = i % 15 == 0 ? 0.0 : rng.uniform(0.05, 0.7);
    const auto a = make(da), b = make(db);
    empty_cases += a.count() == 0 || b.count() == 0;
    dice_err = std::max(dice_err, std::abs(metrics::dice_score(a, b) - oracle_dice(a, b)));
    const double penalty = metrics::grid_diagonal(d, sp);
    hd_err = std::max(hd_err, std::abs(metrics::hd95(a, b) - oracle_hd95(a, b, penalty)));
    hd_err = std::max(hd_err, std::abs(metrics::hd95(b, a) - oracle_hd95(a, b, penalty)));
  }
  const std::string n = std::to_string(o.instances) + " instances, " + std::to_string(empty_cases) + " with an empty mask";
  out.push_back(bound_check("metrics", "dice_exact", dice_err, 0.0, n));
  out.push_back(bound_check("metrics", "hd95", hd_err, 1e-9, n));

  metrics::BinaryMask full{{32, 32, 32}, std::vector<std::uint8_t>(32 * 32 * 32, 0)};
  metrics::BinaryMask empty = full;
  full.values[100] = 1;
  out.push_back(bound_check("metrics", "empty_penalty_32", std::abs(metrics::hd95(full, empty) - 31.0 * std::sqrt(3.0)),
                            1e-9, "expected 53.6936"));
  metrics::BinaryMask none{{4, 4, 4}, std::vector<std::uint8_t>(64, 0)};
  out.push_back(bound_check("metrics", "both_empty", std::abs(metrics::dice_score(none, none) - 1.0) +
                                                         std::abs(metrics::hd95(none, none)), 0.0));
  return out;
}

std::vector<CheckResult> normalization_suite(const SuiteOptions& o) {
  constexpr double kTol = 1e-5;
  std::vector<CheckResult> out;
  Rng rng(o.seed + 404);
  for (int i = 0; i < o.configs; ++i) {
    model::ModelConfig cfg;
    cfg.base_channels = 1 + static_cast<int>(rng.below(2));
    cfg.heads = rng.bernoulli(0.5) ? 8 : 4;
    cfg.prototype_masked_average = rng.bernoulli(0.5);
    cfg.single_channel_activation = rng.bernoulli(0.5);
    cfg.fusion_residual = rng.bernoulli(0.5);
    cfg.init_seed = o.seed * 1000 + static_cast<std::uint64_t>(i);
    const model::Network net(cfg);
    const Dims3 dims{16, 16, 16};
    Tensor x = Tensor::volume(4, dims);
    for (double& v : x.values()) v = rng.normal();

    Rng drop(cfg.init_seed);
    const auto f = net.forward(ag::constant(x), true, drop);
    double worst = 0.0, min_activation = 0.0;
    int fields = 0;
    auto sums = [&](const Tensor& p) {
      const std::size_t n = p.spatial_size();
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (int c = 0; c < p.channels(); ++c) {
          s += p[c * n + j];
          min_activation = std::min(min_activation, p[c * n + j]);
        }
        worst = std::max(worst, std::abs(s - 1.0));
      }
      ++fields;
    };
    for (const auto& m : f.ctp.region_maps) sums(m.value());
    for (const auto& m : f.expert_maps) sums(m.value());
    sums(f.segmentation.probabilities.value());
    for (const auto& b : f.segmentation.block_probabilities) sums(b.value());
    for (const auto& s : f.share_outputs) sums(s.value());
    sums(train::infer_probabilities(net, x, true));
    for (const auto& row : f.drives)
      for (const auto& d : row)
        for (double v : d.activation.value().values()) min_activation = std::min(min_activation, v);
    std::ostringstream detail;
    detail << fields << " fields, base " << cfg.base_channels << ", heads " << cfg.heads
           << ", min probability/activation " << min_activation;
    CheckResult r = bound_check("normalization", "config_" + std::to_string(i), worst, kTol, detail.str());
    r.passed = r.passed && min_activation >= 0.0;
    out.push_back(r);
  }
  return out;
}

std::vector<CheckResult> shape_suite(const SuiteOptions& o, int grid, int base) {
  std::vector<CheckResult> out;
  model::ModelConfig cfg;
  cfg.base_channels = base;
  cfg.init_seed = o.seed;
  const model::Network net(cfg);
  Rng rng(o.seed);
  Tensor x = Tensor::volume(4, {grid, grid, grid});
  for (double& v : x.values()) v = rng.normal();
  const auto f = net.forward(ag::constant(x), false, rng);

  std::vector<std::string> failures;
  int checked = 0;
  auto expect = [&](const std::string& what, const Var& v, const Shape& shape) {
    ++checked;
    if (!v.defined()) {
      failures.push_back(what + " undefined");
    } else if (v.shape() != shape) {
      failures.push_back(what + " " + to_string(v.shape()) + " != " + to_string(shape));
    }
  };
  auto res = [&](int level) { return grid >> (level - 1); };
  const char* enc[5] = {"flair", "t1c", "t1", "t2", "extra"};
  for (int e = 0; e < 5; ++e) {
    const model::Ladder& ladder = e < 4 ? f.modality_features[e] : f.extra_features;
    for (int l = 1; l <= model::kNumLevels; ++l)
      expect(std::string("encoder.") + enc[e] + ".level" + std::to_string(l), ladder[l - 1],
             {cfg.width(l), res(l), res(l), res(l)});
  }
  const int tw = cfg.resolved_token_width(), w5 = cfg.width(5), b5 = res(5);
  int prototypes = 0;
  for (int m = 0; m < 4; ++m) {
    expect("ctp.tokens" + std::to_string(m), f.ctp.self_tokens[m], {b5 * b5 * b5, tw});
    expect("ctp.region_map" + std::to_string(m), f.ctp.region_maps[m], {4, b5, b5, b5});
    for (int r = 0; r < 3; ++r) {
      expect("prototype", f.ctp.prototypes[m][r], {tw});
      prototypes += f.ctp.prototypes[m][r].defined();
      expect("activation", f.drives[m][r].activation, {cfg.single_channel_activation ? 1 : tw, b5, b5, b5});
    }
    expect("modal_fused", f.modal_fused[m], {w5, b5, b5, b5});
  }
  expect("fused", f.fused, {4 * w5, b5, b5, b5});
  for (int l = 1; l <= 4; ++l) {
    expect("expert_map.level" + std::to_string(l), f.expert_maps[l - 1], {4, res(l), res(l), res(l)});
    expect("expert_feature.level" + std::to_string(l), f.expert_features[l - 1], {cfg.width(l), res(l), res(l), res(l)});
  }
  for (int b = 1; b <= 5; ++b)
    expect("deep_supervision.block" + std::to_string(b), f.segmentation.block_probabilities[b - 1],
           {4, res(b), res(b), res(b)});
  for (int s = 0; s < 5; ++s) expect("share_output" + std::to_string(s), f.share_outputs[s], {4, grid, grid, grid});
  expect("segmentation", f.segmentation.probabilities, {4, grid, grid, grid});

  std::ostringstream detail;
  detail << checked << " tensors, " << prototypes << " prototypes, " << model::count_parameters(net.params())
         << " parameters";
  for (const auto& fl : failures) detail << "; " << fl;
  CheckResult r{"shape", "forward_" + std::to_string(grid) + "_base" + std::to_string(base),
                failures.empty() && prototypes == 12, static_cast<double>(failures.size()), 0.0, detail.str()};
  out.push_back(r);

  nn::ParamStore store;
  Rng init(0);
  nn::Conv3d head(store, "head", 4, 4, 1, 1, init);
  out.push_back({"shape", "count_parameters_conv1x1_4to4", model::count_parameters(store) == 20,
                 static_cast<double>(model::count_parameters(store)), 20.0, "expected 20"});
  return out;
}

std::vector<CheckResult> determinism_suite(const SuiteOptions& o, int grid, int base, int steps) {
  std::vector<CheckResult> out;
  const auto a = phantom_cases(2, grid, o.seed);
  const auto b = phantom_cases(2, grid, o.seed);
  bool identical = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (int m = 0; m < 4; ++m) {
      const auto& va = a[i].volumes[m].voxels;
      const auto& vb = b[i].volumes[m].voxels;
      identical = identical && va.size() == vb.size() &&
                  std::memcmp(va.data(), vb.data(), va.size() * sizeof(double)) == 0;
    }
    identical = identical && a[i].labels->values == b[i].labels->values;
  }
  out.push_back({"determinism", "phantoms_bit_identical", identical, identical ? 0.0 : 1.0, 0.0, ""});

  train::TrainConfig cfg;
  cfg.model.base_channels = base;
  cfg.model.init_seed = o.seed;
  cfg.crop = {grid, grid, grid};
  cfg.seed = o.seed;
  cfg.total_epochs = 50;
  train::Trainer t1(cfg, a), t2(cfg, a);
  double worst = 0.0;
  for (int s = 0; s < steps; ++s) worst = std::max(worst, std::abs(t1.step().total - t2.step().total));
  out.push_back(bound_check("determinism", "loss_" + std::to_string(steps) + "_steps", worst, 1e-6));
  return out;
}

}  // namespace protoseg::verify
