// Acceptance runner: one PASS/FAIL line per criterion, exit 0 only if all pass.

#include <CLI11.hpp>
#include <json.hpp>

#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>

#include "protoseg/autograd/ops.hpp"
#include "protoseg/io/config_io.hpp"
#include "protoseg/loss/losses.hpp"
#include "protoseg/metrics/metrics.hpp"
#include "protoseg/train/trainer.hpp"
#include "protoseg/verify/suites.hpp"

namespace fs = std::filesystem;
using namespace protoseg;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Settings {
  fs::path workdir;
  int steps = 300;
  double lr = 1.5e-2;
  double clip = 1.0;
  double noise = 0.02;
  int ablation_seeds = 3;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// Every check of the listed suites must pass; reports the worst margin.
Outcome suites_pass(const std::vector<verify::CheckResult>& results, const std::string& what,
                    bool show_margin = true) {
  Outcome o{true, ""};
  int failed = 0;
  double worst = 0.0;
  for (const auto& r : results) {
    if (!r.passed) {
      ++failed;
      if (o.detail.empty()) o.detail = "first failure " + r.suite + "/" + r.name + " (" + fmt(r.value) + ")";
    }
    if (r.tolerance > 0.0) worst = std::max(worst, r.value / r.tolerance);
  }
  o.pass = failed == 0 && !results.empty();
  std::string summary = std::to_string(results.size()) + " " + what + " checks, " + std::to_string(failed) + " failed";
  if (show_margin) summary += ", worst error/tolerance " + fmt(worst, 3);
  o.detail = o.detail.empty() ? summary : summary + ", " + o.detail;
  return o;
}

Outcome gradient_criterion() {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o = suites_pass(verify::gradient_suite({}), "gradient");
  const double t = seconds_since(t0);
  o.pass = o.pass && t < 300.0;
  o.detail += ", " + fmt(t, 3) + " s";
  return o;
}

Outcome oracle_criterion() {
  const auto t0 = std::chrono::steady_clock::now();
  verify::SuiteOptions opts;
  opts.instances = 100;
  auto results = verify::oracle_suite(opts);
  const auto metrics = verify::metrics_suite(opts);
  results.insert(results.end(), metrics.begin(), metrics.end());
  Outcome o = suites_pass(results, "oracle");
  const double t = seconds_since(t0);
  o.pass = o.pass && t < 300.0;
  o.detail += ", " + std::to_string(opts.instances) + " instances per family, " + fmt(t, 3) + " s";
  return o;
}

Outcome normalization_criterion() {
  verify::SuiteOptions opts;
  opts.configs = 20;
  Outcome o = suites_pass(verify::normalization_suite(opts), "normalization");
  o.detail += ", " + std::to_string(opts.configs) + " configs";
  return o;
}

Outcome shape_criterion() {
  const auto results = verify::shape_suite({}, 32, 4);
  Outcome o = suites_pass(results, "shape", false);
  if (!results.empty()) o.detail += " (" + results.front().detail + ")";
  return o;
}

train::TrainConfig overfit_config(const Settings& s, std::uint64_t seed, bool full_model) {
  train::TrainConfig c;
  c.model.base_channels = 4;
  c.model.full_model = full_model;
  c.model.init_seed = seed;
  c.seed = seed;
  c.crop = {32, 32, 32};
  c.batch_size = 1;
  c.augment = false;
  c.base_lr = s.lr;
  c.grad_clip_norm = s.clip;
  c.total_epochs = (s.steps + 3) / 4;
  return c;
}

// Per-class Dice for NCR/NET, ED and ET, averaged over cases.
std::array<double, 3> class_dice(const model::Network& net, const std::vector<data::MultiModalCase>& cases) {
  std::array<double, 3> sum{};
  for (const auto& c : cases) {
    const auto pred = data::argmax_labels(net.predict(data::case_to_tensor(c)));
    for (std::uint8_t k = 1; k <= 3; ++k) {
      metrics::BinaryMask a{pred.dims, std::vector<std::uint8_t>(pred.values.size())};
      metrics::BinaryMask b{pred.dims, std::vector<std::uint8_t>(pred.values.size())};
      for (std::size_t i = 0; i < pred.values.size(); ++i) {
        a.values[i] = pred.values[i] == k;
        b.values[i] = c.labels->values[i] == k;
      }
      sum[k - 1] += metrics::dice_score(a, b) / static_cast<double>(cases.size());
    }
  }
  return sum;
}

double mean_foreground_dice(const std::array<double, 3>& d) { return (d[0] + d[1] + d[2]) / 3.0; }

double mean_foreground_dice(const model::Network& net, const std::vector<data::MultiModalCase>& cases) {
  return mean_foreground_dice(class_dice(net, cases));
}

struct RunResult {
  std::vector<double> losses;
  std::array<double, 3> train_class_dice{};
  double train_dice = 0.0;
  double seconds = 0.0;
  std::unique_ptr<train::Trainer> trainer;
};

// The overfit run doubles as the seed-0 full-model run of the ablation.
std::map<std::pair<std::uint64_t, bool>, std::shared_ptr<RunResult>> finished_runs;

std::shared_ptr<RunResult> train_run(const Settings& s, const std::vector<data::MultiModalCase>& cases,
                                     std::uint64_t seed, bool full_model, const std::string& tag) {
  if (auto it = finished_runs.find({seed, full_model}); it != finished_runs.end()) return it->second;
  const auto t0 = std::chrono::steady_clock::now();
  auto out = std::make_shared<RunResult>();
  RunResult& r = *out;
  r.trainer = std::make_unique<train::Trainer>(overfit_config(s, seed, full_model), cases);
  std::ofstream log(s.workdir / (tag + "_log.jsonl"));
  while (static_cast<int>(r.losses.size()) < s.steps && !r.trainer->finished()) {
    const auto rec = r.trainer->step();
    r.losses.push_back(rec.total);
    log << train::format_record(rec) << "\n";
  }
  r.train_class_dice = class_dice(r.trainer->state().network, cases);
  r.train_dice = mean_foreground_dice(r.train_class_dice);
  r.seconds = seconds_since(t0);
  finished_runs[{seed, full_model}] = out;
  return out;
}

double mean_of(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  return std::accumulate(v.begin() + static_cast<long>(begin), v.begin() + static_cast<long>(end), 0.0) /
         static_cast<double>(end - begin);
}

std::vector<data::MultiModalCase> training_phantoms(const Settings& s) {
  return verify::phantom_cases(4, 32, 100, s.noise);
}

Outcome overfit_criterion(const Settings& s, json& record) {
  const auto cases = training_phantoms(s);
  const RunResult& r = *train_run(s, cases, 0, true, "overfit");
  r.trainer->save_checkpoint(s.workdir / "overfit.ckpt");
  // Each step sees a different case, so the loss is compared over whole
  // epochs: the first four steps against the four ending at step 200.
  const double initial = mean_of(r.losses, 0, 4);
  const double at200 = r.losses.size() >= 200 ? mean_of(r.losses, 196, 200) : INFINITY;
  const bool loss_ok = at200 < 0.5 * initial;
  const bool dice_ok = r.train_dice >= 0.85;
  record["overfit"] = {{"steps", r.losses.size()}, {"initial_loss", initial}, {"loss_at_200", at200},
                       {"first_step_loss", r.losses.front()}, {"final_loss", r.losses.back()},
                       {"train_dice", r.train_dice}, {"class_dice", r.train_class_dice}, {"seconds", r.seconds}};
  return {loss_ok && dice_ok && static_cast<int>(r.losses.size()) <= 300,
          std::to_string(r.losses.size()) + " steps, mean foreground Dice " + fmt(r.train_dice) +
              " (>= 0.85; NCR/NET " + fmt(r.train_class_dice[0], 3) + ", ED " + fmt(r.train_class_dice[1], 3) +
              ", ET " + fmt(r.train_class_dice[2], 3) + "), loss epoch 1 " + fmt(initial) + " -> step 200 " + fmt(at200) + " (ratio " +
              fmt(at200 / initial, 3) + " < 0.5), " + fmt(r.seconds, 3) + " s"};
}

Outcome ablation_criterion(const Settings& s, json& record) {
  const auto cases = training_phantoms(s);
  const auto held_out = verify::phantom_cases(2, 32, 200, s.noise);
  std::vector<double> full, base;
  for (int seed = 0; seed < s.ablation_seeds; ++seed) {
    for (bool full_model : {true, false}) {
      const std::string tag = std::string(full_model ? "ablation_full_" : "ablation_baseline_") + std::to_string(seed);
      const RunResult& r = *train_run(s, cases, static_cast<std::uint64_t>(seed), full_model, tag);
      const double d = mean_foreground_dice(r.trainer->state().network, held_out);
      (full_model ? full : base).push_back(d);
      record["ablation"][tag] = {{"held_out_dice", d}, {"train_dice", r.train_dice}, {"seconds", r.seconds}};
    }
  }
  const double mf = mean_of(full, 0, full.size()), mb = mean_of(base, 0, base.size());
  record["ablation"]["full_mean"] = mf;
  record["ablation"]["baseline_mean"] = mb;
  std::string per_seed;
  for (std::size_t i = 0; i < full.size(); ++i)
    per_seed += (i ? ", " : "") + fmt(full[i], 3) + "/" + fmt(base[i], 3);
  return {mf >= mb - 0.02, "held-out Dice full " + fmt(mf) + " vs baseline " + fmt(mb) + " over " +
                               std::to_string(full.size()) + " seeds (full/baseline per seed: " + per_seed + ")"};
}

Outcome determinism_criterion() {
  return suites_pass(verify::determinism_suite({}, 16, 2, 5), "determinism");
}

Outcome loss_sanity_criterion() {
  loss::LossConfig cfg;
  const auto truth = *verify::phantom_cases(1, 16, 9).front().labels;
  const ag::Var perfect = ag::constant(data::one_hot(truth));
  const std::vector<ag::Var> four(4, perfect), five(5, perfect);
  const auto w = cfg.class_weights;
  const double total = loss::total_loss({loss::ctp_loss(four, truth, cfg, w), loss::share_loss(five, truth, cfg, w),
                                         loss::expert_loss(four, truth, cfg, w),
                                         loss::deep_supervision_loss(five, truth, cfg, w)})
                           .value()
                           .item();
  train::TrainConfig t;
  const double lr0 = train::poly_lr(0, t), lr_end = train::poly_lr(t.total_epochs, t);
  const bool ok = std::abs(total) <= 10.0 * cfg.epsilon && lr0 == 2e-4 && lr_end == 0.0;
  return {ok, "perfect total loss " + fmt(total, 3) + " (|L| <= " + fmt(10.0 * cfg.epsilon, 3) + "), poly_lr(0) = " +
                  fmt(lr0, 17) + ", poly_lr(" + std::to_string(t.total_epochs) + ") = " + fmt(lr_end)};
}

Outcome checkpoint_criterion(const Settings& s) {
  train::TrainConfig c;
  c.model.base_channels = 2;
  c.crop = {16, 16, 16};
  c.total_epochs = 10;
  c.seed = 11;
  c.model.init_seed = 11;
  c.base_lr = 1e-3;
  const auto cases = verify::phantom_cases(3, 16, 21, s.noise);
  train::Trainer full(c, cases);
  std::vector<double> reference;
  for (int i = 0; i < 9; ++i) reference.push_back(full.step().total);

  const fs::path ckpt = s.workdir / "resume.ckpt";
  {
    train::Trainer first(c, cases);
    for (int i = 0; i < 4; ++i) first.step();
    first.save_checkpoint(ckpt);
  }
  train::Trainer resumed(c, cases);
  resumed.load_checkpoint(ckpt);
  double worst = 0.0;
  for (int i = 4; i < 9; ++i)
    worst = std::max(worst, std::abs(resumed.step().total - reference[static_cast<std::size_t>(i)]));
  return {worst <= 1e-6, "5 post-resume steps (crossing an epoch boundary), max |dL| " + fmt(worst, 3)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"protoseg acceptance criteria"};
  Settings s;
  std::string workdir = "acceptance_work";
  std::vector<int> only;
  app.add_option("--workdir", workdir, "Directory for logs and the results file");
  app.add_option("--only", only, "Run only these criteria (1-9)")->check(CLI::Range(1, 9));
  app.add_option("--steps", s.steps, "Training steps of the overfit and ablation runs");
  app.add_option("--lr", s.lr, "Base learning rate of the overfit and ablation runs");
  app.add_option("--clip", s.clip, "Global gradient-norm clip of the overfit and ablation runs (0 disables)");
  app.add_option("--ablation-seeds", s.ablation_seeds, "Seeds of the ablation check");
  CLI11_PARSE(app, argc, argv);
  s.workdir = workdir;
  fs::create_directories(s.workdir);

  json record;
  const std::set<int> selected(only.begin(), only.end());
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_criterion},
      {"oracle suite", oracle_criterion},
      {"normalization invariants", normalization_criterion},
      {"shape contract", shape_criterion},
      {"overfit experiment", [&] { return overfit_criterion(s, record); }},
      {"ablation direction", [&] { return ablation_criterion(s, record); }},
      {"determinism", determinism_criterion},
      {"loss sanity", loss_sanity_criterion},
      {"checkpoint round-trip", [&] { return checkpoint_criterion(s); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " " << criteria[i].first << ": " << o.detail
              << std::endl;
    record["criteria"][std::to_string(id)] = {{"name", criteria[i].first}, {"pass", o.pass}, {"detail", o.detail}};
  }
  io::write_text_atomic(s.workdir / "acceptance.json", record.dump(2));
  return failures == 0 ? 0 : 1;
}
