#include "protoseg/io/config_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "protoseg/core/error.hpp"

namespace protoseg::io {
namespace {

class Reader {
 public:
  Reader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError("config section '" + section_ + "' must be an object");
  }
  void done() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + section_ + "." + key + "'");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + section_ + "." + key + "': " + e.what());
    }
  }
  void get(const char* key, Dims3& out) {
    std::array<int, 3> a{out.h, out.w, out.d};
    get(key, a);
    out = {a[0], a[1], a[2]};
  }
  template <typename T>
  void get_with(const char* key, T& out) {
    seen_.insert(key);
    if (j_.contains(key)) from_json(j_.at(key), out);
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

json dims_json(Dims3 d) { return json::array({d.h, d.w, d.d}); }

}  // namespace

json to_json(const model::ModelConfig& c) {
  return {{"base_channels", c.base_channels},
          {"token_width", c.token_width},
          {"heads", c.heads},
          {"negative_slope", c.negative_slope},
          {"ffn_dropout", c.ffn_dropout},
          {"ffn_hidden", c.ffn_hidden},
          {"prototype_masked_average", c.prototype_masked_average},
          {"single_channel_activation", c.single_channel_activation},
          {"fusion_residual", c.fusion_residual},
          {"full_model", c.full_model},
          {"init_seed", c.init_seed}};
}

void from_json(const json& j, model::ModelConfig& c) {
  Reader r(j, "model");
  r.get("base_channels", c.base_channels);
  r.get("token_width", c.token_width);
  r.get("heads", c.heads);
  r.get("negative_slope", c.negative_slope);
  r.get("ffn_dropout", c.ffn_dropout);
  r.get("ffn_hidden", c.ffn_hidden);
  r.get("prototype_masked_average", c.prototype_masked_average);
  r.get("single_channel_activation", c.single_channel_activation);
  r.get("fusion_residual", c.fusion_residual);
  r.get("full_model", c.full_model);
  r.get("init_seed", c.init_seed);
  r.done();
}

json to_json(const loss::LossConfig& c) {
  return {{"class_weights", c.class_weights},
          {"inverse_frequency_weights", c.inverse_frequency_weights},
          {"epsilon", c.epsilon},
          {"dice_normalize_by_classes", c.dice_normalize_by_classes},
          {"dice_squared_denominator", c.dice_squared_denominator},
          {"wce_mean", c.wce_mean},
          {"log_floor", c.log_floor}};
}

void from_json(const json& j, loss::LossConfig& c) {
  Reader r(j, "loss");
  r.get("class_weights", c.class_weights);
  r.get("inverse_frequency_weights", c.inverse_frequency_weights);
  r.get("epsilon", c.epsilon);
  r.get("dice_normalize_by_classes", c.dice_normalize_by_classes);
  r.get("dice_squared_denominator", c.dice_squared_denominator);
  r.get("wce_mean", c.wce_mean);
  r.get("log_floor", c.log_floor);
  r.done();
}

json to_json(const data::AugmentPolicy& c) {
  return {{"crop_size", dims_json(c.crop_size)},
          {"flip_prob", c.flip_prob},
          {"intensity_shift_range", {c.intensity_shift_range.first, c.intensity_shift_range.second}},
          {"scale_range", {c.scale_range.first, c.scale_range.second}},
          {"seed", c.seed}};
}

void from_json(const json& j, data::AugmentPolicy& c) {
  Reader r(j, "augment");
  r.get("crop_size", c.crop_size);
  r.get("flip_prob", c.flip_prob);
  r.get("intensity_shift_range", c.intensity_shift_range);
  r.get("scale_range", c.scale_range);
  r.get("seed", c.seed);
  r.done();
}

json to_json(const data::PhantomSpec& c) {
  json profiles = json::array();
  for (const auto& p : c.profiles) profiles.push_back({{"bg", p.bg}, {"ncr", p.ncr}, {"ed", p.ed}, {"et", p.et}});
  return {{"grid_size", dims_json(c.grid_size)},
          {"center_jitter", c.center_jitter},
          {"r_et", c.r_et},
          {"r_tc", c.r_tc},
          {"r_wt", c.r_wt},
          {"radius_jitter", c.radius_jitter},
          {"brain_radius", c.brain_radius},
          {"profiles", profiles},
          {"noise_sigma", c.noise_sigma},
          {"seed", c.seed}};
}

void from_json(const json& j, data::PhantomSpec& c) {
  Reader r(j, "phantom");
  r.get("grid_size", c.grid_size);
  r.get("center_jitter", c.center_jitter);
  r.get("r_et", c.r_et);
  r.get("r_tc", c.r_tc);
  r.get("r_wt", c.r_wt);
  r.get("radius_jitter", c.radius_jitter);
  r.get("brain_radius", c.brain_radius);
  r.get("noise_sigma", c.noise_sigma);
  r.get("seed", c.seed);
  json profiles;
  r.get("profiles", profiles);
  if (!profiles.is_null()) {
    if (!profiles.is_array() || profiles.size() != 4) throw ConfigError("phantom.profiles must list 4 modalities");
    for (std::size_t m = 0; m < 4; ++m) {
      Reader p(profiles[m], "phantom.profiles[" + std::to_string(m) + "]");
      p.get("bg", c.profiles[m].bg);
      p.get("ncr", c.profiles[m].ncr);
      p.get("ed", c.profiles[m].ed);
      p.get("et", c.profiles[m].et);
      p.done();
    }
  }
  r.done();
}

json to_json(const train::TrainConfig& c) {
  return {{"base_lr", c.base_lr},
          {"total_epochs", c.total_epochs},
          {"poly_power", c.poly_power},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"weight_decay", c.weight_decay},
          {"decoupled_weight_decay", c.decoupled_weight_decay},
          {"grad_clip_norm", c.grad_clip_norm},
          {"crop", dims_json(c.crop)},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"augment", c.augment},
          {"checkpoint_every", c.checkpoint_every},
          {"validate_every", c.validate_every},
          {"tta_enabled", c.tta_enabled}};
}

void from_json(const json& j, train::TrainConfig& c) {
  Reader r(j, "train");
  r.get("base_lr", c.base_lr);
  r.get("total_epochs", c.total_epochs);
  r.get("poly_power", c.poly_power);
  r.get("adam_beta1", c.adam_beta1);
  r.get("adam_beta2", c.adam_beta2);
  r.get("adam_eps", c.adam_eps);
  r.get("weight_decay", c.weight_decay);
  r.get("decoupled_weight_decay", c.decoupled_weight_decay);
  r.get("grad_clip_norm", c.grad_clip_norm);
  r.get("crop", c.crop);
  r.get("batch_size", c.batch_size);
  r.get("seed", c.seed);
  r.get("augment", c.augment);
  r.get("checkpoint_every", c.checkpoint_every);
  r.get("validate_every", c.validate_every);
  r.get("tta_enabled", c.tta_enabled);
  r.done();
}

json to_json(const RunConfig& c) {
  return {{"train", to_json(c.train)},
          {"model", to_json(c.train.model)},
          {"loss", to_json(c.train.loss)},
          {"augment", to_json(c.train.augment_policy)},
          {"phantom", to_json(c.phantom)}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Reader r(j, "config");
  r.get_with("train", c.train);
  r.get_with("model", c.train.model);
  r.get_with("loss", c.train.loss);
  r.get_with("augment", c.train.augment_policy);
  r.get_with("phantom", c.phantom);
  r.done();
  return c;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void apply_overrides(json& doc, const std::vector<std::string>& overrides) {
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    const std::string key = o.substr(0, eq), raw = o.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;
    }
    json* node = &doc;
    std::stringstream ks(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ks, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      if (!node->contains(parts[i])) (*node)[parts[i]] = json::object();
      node = &(*node)[parts[i]];
    }
    (*node)[parts.back()] = value;
  }
}

}  // namespace protoseg::io
