#pragma once

// JSON (de)serialization of every configuration struct. Keys mirror the C++
// field names; decoding rejects unknown keys.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoseg/data/phantom.hpp"
#include "protoseg/train/config.hpp"

namespace protoseg::io {

using nlohmann::json;

json to_json(const model::ModelConfig& c);
json to_json(const loss::LossConfig& c);
json to_json(const data::AugmentPolicy& c);
json to_json(const data::PhantomSpec& c);
json to_json(const train::TrainConfig& c);

void from_json(const json& j, model::ModelConfig& c);
void from_json(const json& j, loss::LossConfig& c);
void from_json(const json& j, data::AugmentPolicy& c);
void from_json(const json& j, data::PhantomSpec& c);
void from_json(const json& j, train::TrainConfig& c);

/// Top-level document {"train": ..., "model": ..., "loss": ..., "augment": ..., "phantom": ...}.
struct RunConfig {
  train::TrainConfig train;
  data::PhantomSpec phantom = data::default_phantom_spec(32, 0);
};

json to_json(const RunConfig& c);
RunConfig run_config_from_json(const json& j);

json read_json_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

/// Applies "a.b.c=value" overrides to a JSON document; the value is parsed
/// as JSON when possible, otherwise taken as a string.
void apply_overrides(json& doc, const std::vector<std::string>& overrides);

}  // namespace protoseg::io
