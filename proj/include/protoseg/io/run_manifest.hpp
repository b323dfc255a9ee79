#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace protoseg::io {

/// Record of one CLI invocation, written before any long computation.
struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  nlohmann::json config;  // every default materialized
  std::uint64_t seed = 0;
  std::string source;     // build revision
  std::string started_at;
  std::string finished_at;
  std::string status = "running";
};

std::string source_fingerprint();
std::string utc_timestamp();
RunManifest make_run_manifest(std::string command, std::vector<std::string> arguments, nlohmann::json config,
                              std::uint64_t seed);
void write_run_manifest(const std::filesystem::path& path, const RunManifest& m);

}  // namespace protoseg::io
