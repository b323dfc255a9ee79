// protoseg command-line entry point.

#include <CLI11.hpp>

#include <algorithm>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "protoseg/core/error.hpp"
#include "protoseg/data/augment.hpp"
#include "protoseg/data/manifest.hpp"
#include "protoseg/data/phantom.hpp"
#include "protoseg/io/config_io.hpp"
#include "protoseg/io/image.hpp"
#include "protoseg/io/nifti.hpp"
#include "protoseg/io/run_manifest.hpp"
#include "protoseg/kernels/kernels.hpp"
#include "protoseg/loss/losses.hpp"
#include "protoseg/metrics/metrics.hpp"
#include "protoseg/train/checkpoint.hpp"
#include "protoseg/train/inference.hpp"
#include "protoseg/verify/suites.hpp"

namespace fs = std::filesystem;
using namespace protoseg;
using nlohmann::json;

namespace {

class VerificationFailure : public Error {
 public:
  explicit VerificationFailure(const std::string& m) : Error("VerificationFailure", m, ErrorKind::Verification) {}
};

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;
};

void add_config_options(CLI::App* cmd, ConfigArgs& c) {
  cmd->add_option("--config", c.file, "JSON config file (sections train, model, loss, augment, phantom)");
  cmd->add_option("--set", c.sets, "Override a config key, e.g. --set train.base_lr=1e-3")->take_all();
}

// defaults < file < --set < dedicated flags
json resolve_config_doc(const ConfigArgs& c, json defaults, const std::vector<std::string>& flag_overrides) {
  json doc = std::move(defaults);
  if (!c.file.empty()) doc.merge_patch(io::read_json_file(c.file));
  io::apply_overrides(doc, c.sets);
  io::apply_overrides(doc, flag_overrides);
  return doc;
}

io::RunConfig resolve_run_config(const ConfigArgs& c, const std::vector<std::string>& flag_overrides) {
  io::RunConfig rc = io::run_config_from_json(resolve_config_doc(c, io::to_json(io::RunConfig{}), flag_overrides));
  rc.train.validate();
  return rc;
}

bool has_config(const ConfigArgs& c) { return !c.file.empty() || !c.sets.empty(); }

class ManifestScope {
 public:
  ManifestScope(const fs::path& dir, io::RunManifest m) : path_(dir / "run_manifest.json"), m_(std::move(m)) {
    io::write_run_manifest(path_, m_);
  }
  void finish(const std::string& status) {
    m_.status = status;
    m_.finished_at = io::utc_timestamp();
    io::write_run_manifest(path_, m_);
    done_ = true;
  }
  ~ManifestScope() {
    if (done_) return;
    try {
      finish("failed");
    } catch (...) {
    }
  }

 private:
  fs::path path_;
  io::RunManifest m_;
  bool done_ = false;
};

std::vector<fs::path> dataset_entries(const fs::path& p) {
  if (fs::is_regular_file(p)) return data::read_manifest(p);
  if (!fs::is_directory(p)) throw IoError("dataset " + p.string() + " does not exist");
  if (fs::is_regular_file(p / "manifest.txt")) return data::read_manifest(p / "manifest.txt");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(p))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) dirs.push_back(p);
  return dirs;
}

std::vector<data::MultiModalCase> load_dataset(const fs::path& p, data::LabelPolicy policy, bool normalize) {
  std::vector<data::MultiModalCase> out;
  for (const auto& dir : dataset_entries(p)) {
    try {
      data::MultiModalCase c = data::load_case(dir, policy);
      out.push_back(normalize ? data::normalize_case(c) : std::move(c));
    } catch (const Error& e) {
      throw Error(e.code(), "case " + dir.filename().string() + ": " + e.what(), e.kind());
    }
  }
  if (out.empty()) throw IoError("dataset " + p.string() + " lists no cases");
  return out;
}

// The checkpoint's own architecture unless a config was given, in which case
// the checkpoint must match it.
model::Network network_for(const fs::path& checkpoint, const ConfigArgs& cfg, train::TrainConfig& used) {
  const train::Checkpoint ck = train::read_checkpoint(checkpoint);
  used = has_config(cfg) ? resolve_run_config(cfg, {}).train : ck.config;
  model::Network net(used.model);
  train::load_parameters(ck, net);
  return net;
}

std::vector<std::string> raw_args(int argc, char** argv) { return {argv, argv + argc}; }

std::string shape_line(const std::string& name, const ag::Var& v) {
  return "  " + name + " " + (v.defined() ? to_string(v.shape()) : std::string("-"));
}

// ---------------------------------------------------------------------------

struct GenArgs {
  int count = 4;
  std::optional<int> size;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise;
  std::string out;
  ConfigArgs config;
};

int cmd_gen_phantoms(const GenArgs& a, const std::vector<std::string>& argv) {
  json file_doc = a.config.file.empty() ? json::object() : io::read_json_file(a.config.file);
  int size = a.size.value_or(32);
  if (!a.size && file_doc.contains("phantom") && file_doc["phantom"].contains("grid_size")) {
    const json& gs = file_doc["phantom"]["grid_size"];
    size = gs.is_array() ? gs.at(0).get<int>() : gs.get<int>();
  }
  const std::uint64_t seed = a.seed.value_or(0);
  std::vector<std::string> flags;
  if (a.size) flags.push_back("phantom.grid_size=[" + std::to_string(size) + "," + std::to_string(size) + "," +
                              std::to_string(size) + "]");
  if (a.seed) flags.push_back("phantom.seed=" + std::to_string(*a.seed));
  if (a.noise) flags.push_back("phantom.noise_sigma=" + std::to_string(*a.noise));
  io::RunConfig defaults;
  defaults.phantom = data::default_phantom_spec(size, seed);
  const json doc = resolve_config_doc(a.config, io::to_json(defaults), flags);
  const data::PhantomSpec spec = io::run_config_from_json(doc).phantom;
  spec.validate();
  if (a.count <= 0) throw ConfigError("--count must be positive");
  const Dims3 grid = spec.grid_size;
  if (grid.h % 16 != 0 || grid.w % 16 != 0 || grid.d % 16 != 0)
    std::cerr << "warning: grid size " << to_string(grid)
              << " is not divisible by 16; training will crop to a multiple of 16\n";

  const fs::path out(a.out);
  ManifestScope manifest(out, io::make_run_manifest("gen-phantoms", argv, {{"phantom", doc["phantom"]},
                                                                           {"count", a.count}}, spec.seed));
  std::vector<fs::path> entries;
  for (const auto& c : data::generate_phantom_set(spec, a.count)) {
    data::save_case(c, out / c.case_id);
    entries.emplace_back(c.case_id);
  }
  data::write_manifest(out / "manifest.txt", entries);
  manifest.finish("completed");
  std::cout << "wrote " << a.count << " phantoms of " << to_string(spec.grid_size) << " to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data, val_data, out, resume;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, base_channels, crop;
  std::optional<double> lr;
  long max_steps = -1;
  bool dry_run = false;
  bool baseline = false;
  ConfigArgs config;
};

void dry_run(const train::TrainConfig& cfg, const std::vector<data::MultiModalCase>& cases) {
  Rng data_rng(cfg.seed), drop(cfg.seed);
  const auto c = data::augment_case(cases.front(), cfg.resolved_augment_policy(), data_rng);
  const model::Network net(cfg.model);
  const ag::Var input = ag::constant(data::case_to_tensor(c));
  const auto out = net.forward(input, true, drop);
  const auto l = loss::compute_losses(out, *c.labels, cfg.loss, cfg.model.full_model);
  ag::backward(l.total);
  std::size_t with_grad = 0;
  for (const auto& [name, p] : net.params().entries()) {
    bool nz = false;
    for (double g : p.grad().values()) nz = nz || g != 0.0;
    with_grad += nz;
  }
  std::cout << "case " << c.case_id << ", " << (cfg.model.full_model ? "full model" : "baseline") << ", "
            << model::count_parameters(net.params()) << " parameters in " << net.params().size() << " tensors ("
            << with_grad << " with nonzero gradient)\n";
  std::cout << "loss L_ctp=" << l.ctp.value().item() << " L_share=" << l.share.value().item()
            << " L_exp=" << l.expert.value().item() << " L_deep=" << l.deep_supervision.value().item()
            << " L_total=" << l.total.value().item() << "\n";
  std::cout << "shapes:\n" << shape_line("input", input) << "\n";
  const char* enc[4] = {"flair", "t1c", "t1", "t2"};
  for (int l5 = 0; l5 < model::kNumLevels; ++l5) {
    for (int m = 0; m < 4; ++m)
      std::cout << shape_line(std::string("encoder.") + enc[m] + ".level" + std::to_string(l5 + 1),
                              out.modality_features[m][l5]) << "\n";
    std::cout << shape_line("encoder.extra.level" + std::to_string(l5 + 1), out.extra_features[l5]) << "\n";
  }
  for (int m = 0; m < 4; ++m) {
    std::cout << shape_line(std::string("ctp.") + enc[m] + ".tokens", out.ctp.self_tokens[m]) << "\n"
              << shape_line(std::string("ctp.") + enc[m] + ".features", out.ctp.features[m]) << "\n"
              << shape_line(std::string("ctp.") + enc[m] + ".region_maps", out.ctp.region_maps[m]) << "\n";
    for (int r = 0; r < 3; ++r) {
      const std::string key = std::string(enc[m]) + "." + data::class_name(r + 1);
      std::cout << shape_line("prototype." + key, out.ctp.prototypes[m][r]) << "\n"
                << shape_line("activation." + key, out.drives[m][r].activation) << "\n";
    }
    std::cout << shape_line(std::string("pfrf.") + enc[m] + ".assembled", out.modal_fused[m]) << "\n";
  }
  std::cout << shape_line("pfrf.fused", out.fused) << "\n";
  for (int l4 = 0; l4 < 4; ++l4)
    std::cout << shape_line("kiimi.level" + std::to_string(l4 + 1) + ".maps", out.expert_maps[l4]) << "\n"
              << shape_line("kiimi.level" + std::to_string(l4 + 1) + ".integrated", out.expert_features[l4]) << "\n";
  for (int s = 0; s < 5; ++s) std::cout << shape_line("decoder.share.output" + std::to_string(s), out.share_outputs[s]) << "\n";
  for (int b = 0; b < model::kNumLevels; ++b)
    std::cout << shape_line("decoder.seg.block" + std::to_string(b + 1), out.segmentation.block_probabilities[b]) << "\n";
  std::cout << shape_line("decoder.seg.output", out.segmentation.probabilities) << "\n";
}

double validate(const model::Network& net, const std::vector<data::MultiModalCase>& cases,
                const train::TrainConfig& cfg, const fs::path& snapshot) {
  std::vector<metrics::RegionReport> reports;
  for (const auto& c : cases) {
    auto r = metrics::evaluate_case(train::segment_case(net, c, cfg.crop, cfg.tta_enabled), *c.labels, c.spacing);
    r.case_id = c.case_id;
    reports.push_back(r);
  }
  std::ofstream os(snapshot);
  metrics::write_report_json(os, reports);
  const auto mean = metrics::mean_report(reports);
  return (mean.dice[0] + mean.dice[1] + mean.dice[2]) / 3.0;
}

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  std::vector<std::string> flags;
  if (a.seed) {
    flags.push_back("train.seed=" + std::to_string(*a.seed));
    flags.push_back("model.init_seed=" + std::to_string(*a.seed));
  }
  if (a.epochs) flags.push_back("train.total_epochs=" + std::to_string(*a.epochs));
  if (a.base_channels) flags.push_back("model.base_channels=" + std::to_string(*a.base_channels));
  if (a.crop) flags.push_back("train.crop=[" + std::to_string(*a.crop) + "," + std::to_string(*a.crop) + "," +
                              std::to_string(*a.crop) + "]");
  if (a.lr) {
    std::ostringstream v;
    v << std::setprecision(17) << *a.lr;
    flags.push_back("train.base_lr=" + v.str());
  }
  if (a.baseline) flags.push_back("model.full_model=false");
  const io::RunConfig rc = resolve_run_config(a.config, flags);
  const train::TrainConfig& cfg = rc.train;

  const fs::path out(a.out);
  json doc = io::to_json(rc);
  doc.erase("phantom");
  ManifestScope manifest(out, io::make_run_manifest(a.dry_run ? "train --dry-run" : "train", argv, doc, cfg.seed));
  const auto cases = load_dataset(a.data, data::LabelPolicy::Require, true);

  if (a.dry_run) {
    dry_run(cfg, cases);
    manifest.finish("completed");
    return 0;
  }
  const auto val = a.val_data.empty() ? cases : load_dataset(a.val_data, data::LabelPolicy::Require, true);

  train::Trainer trainer(cfg, cases);
  if (!a.resume.empty()) {
    trainer.load_checkpoint(a.resume);
    std::cout << "resumed at step " << trainer.state().step << " (epoch " << trainer.state().epoch << ")\n";
  }
  fs::create_directories(out / "checkpoints");
  std::ofstream log(out / "train_log.jsonl", a.resume.empty() ? std::ios::trunc : std::ios::app);
  const int spe = trainer.steps_per_epoch();
  double best = -1.0;
  while (!trainer.finished() && (a.max_steps < 0 || trainer.state().step < a.max_steps)) {
    train::StepRecord rec;
    try {
      rec = trainer.step();
    } catch (const NonFiniteLoss&) {
      trainer.save_checkpoint(out / "checkpoints" / "nonfinite.ckpt");
      throw;
    }
    log << train::format_record(rec) << "\n" << std::flush;
    if (rec.clipped)
      std::cerr << "note: gradient norm " << rec.grad_norm << " clipped to " << cfg.grad_clip_norm << " at step "
                << rec.step << "\n";
    const long step = trainer.state().step;
    if (step % 10 == 0 || step == 1)
      std::cout << "step " << step << " epoch " << rec.epoch << " lr " << rec.lr << " loss " << rec.total << "\n";
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0)
      trainer.save_checkpoint(out / "checkpoints" / ("step_" + std::to_string(step) + ".ckpt"));
    if (cfg.validate_every > 0 && step % spe == 0) {
      const long epoch = step / spe;
      if (epoch % cfg.validate_every == 0) {
        const double dice = validate(trainer.state().network, val, cfg,
                                     out / ("metrics_epoch_" + std::to_string(epoch) + ".json"));
        std::cout << "epoch " << epoch << " validation mean Dice " << dice << "\n";
        if (dice > best) {
          best = dice;
          trainer.save_checkpoint(out / "checkpoints" / "best.ckpt");
        }
      }
    }
  }
  trainer.save_checkpoint(out / "checkpoints" / "final.ckpt");
  if (best < 0.0) fs::copy_file(out / "checkpoints" / "final.ckpt", out / "checkpoints" / "best.ckpt",
                                fs::copy_options::overwrite_existing);
  manifest.finish("completed");
  std::cout << "trained to step " << trainer.state().step << "; checkpoints in " << (out / "checkpoints").string()
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string data, out, checkpoint, predictions;
  bool identity = false;
  bool tta = false;
  ConfigArgs config;
};

data::LabelVolume read_prediction(const fs::path& dir, const std::string& case_id) {
  for (const char* suffix : {".nii.gz", ".nii", "_pred.nii.gz", "_pred.nii"}) {
    const fs::path p = dir / (case_id + suffix);
    if (!fs::exists(p)) continue;
    const io::NiftiVolume v = io::read_nifti(p);
    data::LabelVolume l{v.dims, std::vector<std::uint8_t>(v.voxels.size())};
    for (std::size_t i = 0; i < v.voxels.size(); ++i) l.values[i] = data::remap_raw_label(v.voxels[i]);
    return l;
  }
  throw IoError("no prediction for case " + case_id + " in " + dir.string());
}

int cmd_evaluate(const EvalArgs& a, const std::vector<std::string>& argv) {
  const int modes = a.identity + !a.checkpoint.empty() + !a.predictions.empty();
  if (modes != 1) throw ConfigError("evaluate needs exactly one of --checkpoint, --predictions, --identity");
  const fs::path out(a.out);
  json doc{{"data", a.data}, {"tta", a.tta}, {"identity", a.identity}, {"checkpoint", a.checkpoint},
           {"predictions", a.predictions}};
  ManifestScope manifest(out, io::make_run_manifest("evaluate", argv, doc, 0));
  const auto cases = load_dataset(a.data, data::LabelPolicy::Require, !a.checkpoint.empty());

  std::vector<data::LabelVolume> preds;
  if (!a.checkpoint.empty()) {
    train::TrainConfig used;
    const model::Network net = network_for(a.checkpoint, a.config, used);
    for (const auto& c : cases) preds.push_back(train::segment_case(net, c, used.crop, a.tta));
  } else {
    if (a.tta) std::cerr << "note: --tta has no effect on fixed predictions\n";
    for (const auto& c : cases) preds.push_back(a.identity ? *c.labels : read_prediction(a.predictions, c.case_id));
  }

  std::vector<metrics::RegionReport> reports(cases.size());
  std::vector<std::exception_ptr> errors(cases.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < cases.size(); ++i) {
    try {
      reports[i] = metrics::evaluate_case(preds[i], *cases[i].labels, cases[i].spacing);
      reports[i].case_id = cases[i].case_id;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  fs::create_directories(out);
  {
    std::ofstream csv(out / "report.csv");
    metrics::write_report_csv(csv, reports);
    std::ofstream js(out / "report.json");
    metrics::write_report_json(js, reports);
  }
  const auto mean = metrics::mean_report(reports);
  std::cout << std::fixed << std::setprecision(4);
  for (auto r : metrics::kRegions) {
    const auto i = static_cast<std::size_t>(r);
    std::cout << metrics::region_name(r) << " Dice " << mean.dice[i] << " HD95 " << mean.hd95[i] << "\n";
  }
  manifest.finish("completed");
  return 0;
}

// ---------------------------------------------------------------------------

struct SegmentArgs {
  std::string data, out, checkpoint;
  bool tta = false;
  ConfigArgs config;
};

int cmd_segment(const SegmentArgs& a, const std::vector<std::string>& argv) {
  const fs::path out(a.out);
  ManifestScope manifest(out, io::make_run_manifest("segment", argv,
                                                    {{"data", a.data}, {"checkpoint", a.checkpoint}, {"tta", a.tta}}, 0));
  train::TrainConfig used;
  const model::Network net = network_for(a.checkpoint, a.config, used);
  const auto cases = load_dataset(a.data, data::LabelPolicy::Optional, true);
  for (const auto& c : cases) {
    const data::LabelVolume l = train::segment_case(net, c, used.crop, a.tta);
    io::NiftiVolume v{l.dims, c.spacing, std::vector<double>(l.values.size())};
    for (std::size_t i = 0; i < l.values.size(); ++i) v.voxels[i] = data::raw_label(l.values[i]);
    io::write_nifti(out / (c.case_id + ".nii.gz"), v, io::NiftiType::UInt8);
    std::cout << "segmented " << c.case_id << "\n";
  }
  manifest.finish("completed");
  return 0;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
  std::vector<std::string> suites;
  std::string inject_fault;
  std::string out = ".";
  std::uint64_t seed = 0;
  int instances = 100;
  int configs = 20;
};

int cmd_verify(const VerifyArgs& a, const std::vector<std::string>& argv) {
  verify::SuiteOptions o;
  o.seed = a.seed;
  o.instances = a.instances;
  o.configs = a.configs;
  if (!a.inject_fault.empty()) {
    if (a.inject_fault != "cross_attend") throw ConfigError("unknown fault '" + a.inject_fault + "' (known: cross_attend)");
    o.inject_cross_attention_fault = true;
  }
  const auto suites = a.suites.empty() ? verify::suite_names() : a.suites;
  for (const auto& s : suites)
    if (std::find(verify::suite_names().begin(), verify::suite_names().end(), s) == verify::suite_names().end())
      throw ConfigError("unknown suite '" + s + "'");
  ManifestScope manifest(fs::path(a.out), io::make_run_manifest("verify", argv,
                                                                {{"suites", suites},
                                                                 {"inject_fault", a.inject_fault},
                                                                 {"instances", a.instances},
                                                                 {"configs", a.configs}},
                                                                a.seed));
  std::vector<std::string> failed;
  std::size_t total = 0;
  for (const auto& s : suites) {
    for (const auto& r : verify::run_suite(s, o)) {
      ++total;
      std::cout << (r.passed ? "PASS " : "FAIL ") << r.suite << "/" << r.name << "  " << std::scientific
                << std::setprecision(3) << r.value << " (limit " << r.tolerance << ")"
                << (r.detail.empty() ? "" : "  " + r.detail) << "\n";
      if (!r.passed) failed.push_back(r.suite + "/" + r.name);
    }
  }
  std::cout << total - failed.size() << "/" << total << " checks passed\n";
  if (!failed.empty()) {
    std::string names;
    for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
    throw VerificationFailure(std::to_string(failed.size()) + " of " + std::to_string(total) + " checks failed: " + names);
  }
  manifest.finish("completed");
  return 0;
}

// ---------------------------------------------------------------------------

struct PlotArgs {
  std::string case_dir, out, labels, modality = "flair", checkpoint;
  bool no_labels = false;
  bool activations = false;
  double alpha = 0.5;
  ConfigArgs config;
};

int cmd_plot_slices(const PlotArgs& a, const std::vector<std::string>& argv) {
  const fs::path out(a.out);
  ManifestScope manifest(out, io::make_run_manifest("plot-slices", argv,
                                                    {{"case", a.case_dir}, {"labels", a.labels},
                                                     {"modality", a.modality}, {"activations", a.activations},
                                                     {"checkpoint", a.checkpoint}},
                                                    0));
  if (a.activations && a.checkpoint.empty()) throw ConfigError("--activations needs --checkpoint");
  const data::MultiModalCase c = data::load_case(a.case_dir, data::LabelPolicy::Optional);
  int m = -1;
  for (int i = 0; i < 4; ++i)
    if (a.modality == data::modality_suffix(data::kModalities[i])) m = i;
  if (m < 0) throw ConfigError("unknown modality '" + a.modality + "' (flair, t1ce, t1, t2)");

  std::optional<data::LabelVolume> labels;
  if (!a.labels.empty()) {
    labels = read_prediction(fs::path(a.labels).parent_path(), fs::path(a.labels).stem().stem().string());
  } else if (!a.no_labels) {
    labels = c.labels;
  }
  const Dims3 dims = c.dims();
  for (io::Plane p : io::kPlanes) {
    const fs::path file = out / (c.case_id + "_" + io::plane_name(p) + ".png");
    io::write_png(file, io::overlay_slice(c.volume(data::kModalities[m]).voxels, dims, labels ? &*labels : nullptr, p,
                                          io::mid_index(dims, p), a.alpha));
    std::cout << file.string() << "\n";
  }

  if (a.activations) {
    train::TrainConfig used;
    const model::Network net = network_for(a.checkpoint, a.config, used);
    if (!net.config().full_model) throw ConfigError("the baseline network has no activation maps");
    const data::MultiModalCase n = data::normalize_case(c);
    model::require_divisible_by_16(dims);
    ag::NoGradGuard ng;
    Rng rng(0);
    const auto f = net.forward(ag::constant(data::case_to_tensor(n)), false, rng, false);
    const char* region_keys[3] = {"ncr", "ed", "et"};
    for (int mod = 0; mod < 4; ++mod)
      for (int r = 0; r < 3; ++r) {
        const Tensor& act = f.drives[mod][r].activation.value();
        Tensor mean = Tensor::volume(1, act.spatial());
        const std::size_t vox = act.spatial_size();
        for (int ch = 0; ch < act.channels(); ++ch)
          for (std::size_t j = 0; j < vox; ++j) mean[j] += act[ch * vox + j] / act.channels();
        Tensor up = Tensor::volume(1, dims);
        kernels::resize_trilinear_forward(1, mean.spatial(), dims, mean.data(), up.data());
        const fs::path file = out / (c.case_id + "_activation_" + data::modality_suffix(data::kModalities[mod]) + "_" +
                                     region_keys[r] + ".png");
        io::write_png(file, io::heatmap_slice(up.storage(), dims, io::Plane::Axial, io::mid_index(dims, io::Plane::Axial)));
        std::cout << file.string() << "\n";
      }
  }
  manifest.finish("completed");
  return 0;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Usage: return 1;
    case ErrorKind::Data: return 2;
    case ErrorKind::Verification: return 3;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prototype-driven multi-expert brain tumor segmentation"};
  app.require_subcommand(1);
  const auto args = raw_args(argc, argv);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-phantoms", "Generate synthetic nested-ellipsoid cases in BraTS layout");
  g->add_option("--count", gen.count, "Number of cases")->capture_default_str();
  g->add_option("--size", gen.size, "Grid extent per axis (default 32)");
  g->add_option("--seed", gen.seed, "Seed of the first case; case i uses seed + i");
  g->add_option("--noise", gen.noise, "Gaussian noise sigma inside the brain");
  g->add_option("--out", gen.out, "Output directory")->required();
  add_config_options(g, gen.config);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train on a labelled dataset");
  t->add_option("--data", tr.data, "Case manifest or dataset directory")->required();
  t->add_option("--val-data", tr.val_data, "Validation manifest (default: training cases)");
  t->add_option("--out", tr.out, "Run directory")->required();
  t->add_option("--resume", tr.resume, "Checkpoint to resume from");
  t->add_option("--seed", tr.seed, "Seed for initialization, data order, augmentation and dropout");
  t->add_option("--epochs", tr.epochs, "total_epochs");
  t->add_option("--base-channels", tr.base_channels, "Encoder width b");
  t->add_option("--crop", tr.crop, "Cubic crop extent (multiple of 16)");
  t->add_option("--lr", tr.lr, "Base learning rate");
  t->add_option("--max-steps", tr.max_steps, "Stop after this many steps in total");
  t->add_flag("--baseline", tr.baseline, "Plain U-Net without the prototype and expert modules");
  t->add_flag("--dry-run", tr.dry_run, "One forward and backward pass; print losses and shapes");
  add_config_options(t, tr.config);

  EvalArgs ev;
  auto* e = app.add_subcommand("evaluate", "Dice and HD95 per case and region");
  e->add_option("--data", ev.data, "Labelled case manifest or dataset directory")->required();
  e->add_option("--out", ev.out, "Report directory")->required();
  e->add_option("--checkpoint", ev.checkpoint, "Model checkpoint");
  e->add_option("--predictions", ev.predictions, "Directory of <case_id>.nii.gz label volumes");
  e->add_flag("--identity", ev.identity, "Evaluate the ground truth against itself");
  e->add_flag("--tta", ev.tta, "Flip-ensemble test-time augmentation");
  add_config_options(e, ev.config);

  SegmentArgs sg;
  auto* s = app.add_subcommand("segment", "Write label volumes with sliding-window inference");
  s->add_option("--data", sg.data, "Case manifest or dataset directory")->required();
  s->add_option("--checkpoint", sg.checkpoint, "Model checkpoint")->required();
  s->add_option("--out", sg.out, "Output directory")->required();
  s->add_flag("--tta", sg.tta, "Flip-ensemble test-time augmentation");
  add_config_options(s, sg.config);

  VerifyArgs vf;
  auto* v = app.add_subcommand("verify", "Gradient, oracle, metric, normalization, shape and determinism checks");
  v->add_option("--suite", vf.suites, "Suite(s) to run (default: all)")->take_all();
  v->add_option("--inject-fault", vf.inject_fault, "Deliberately break an operation (cross_attend)");
  v->add_option("--seed", vf.seed)->capture_default_str();
  v->add_option("--instances", vf.instances, "Random instances per oracle family")->capture_default_str();
  v->add_option("--configs", vf.configs, "Random configurations for the normalization suite")->capture_default_str();
  v->add_option("--out", vf.out, "Directory for the run manifest")->capture_default_str();

  PlotArgs pl;
  auto* p = app.add_subcommand("plot-slices", "Mid-slice PNG overlays in three planes");
  p->add_option("--case", pl.case_dir, "Case directory")->required();
  p->add_option("--out", pl.out, "Output directory")->required();
  p->add_option("--modality", pl.modality, "Base image: flair, t1ce, t1 or t2")->capture_default_str();
  p->add_option("--labels", pl.labels, "Label volume to overlay (default: the case's seg file)");
  p->add_flag("--no-labels", pl.no_labels, "Grayscale only");
  p->add_option("--alpha", pl.alpha, "Overlay opacity")->capture_default_str();
  p->add_flag("--activations", pl.activations, "Also export the 12 activation heat maps");
  p->add_option("--checkpoint", pl.checkpoint, "Checkpoint for --activations");
  add_config_options(p, pl.config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    std::cerr << "error: UsageError: " << ex.what() << "\n";
    return 1;
  }

  try {
    if (*g) return cmd_gen_phantoms(gen, args);
    if (*t) return cmd_train(tr, args);
    if (*e) return cmd_evaluate(ev, args);
    if (*s) return cmd_segment(sg, args);
    if (*v) return cmd_verify(vf, args);
    if (*p) return cmd_plot_slices(pl, args);
  } catch (const Error& ex) {
    std::cout.flush();
    std::cerr << "error: " << ex.code() << ": " << ex.what() << "\n";
    return exit_code(ex.kind());
  } catch (const std::exception& ex) {
    std::cout.flush();
    std::cerr << "error: InternalError: " << ex.what() << "\n";
    return 2;
  }
  return 1;
}
