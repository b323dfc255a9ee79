#include "protoseg/io/run_manifest.hpp"

#include <chrono>
#include <ctime>

#include "protoseg/io/config_io.hpp"

#ifndef PROTOSEG_SOURCE_ID
#define PROTOSEG_SOURCE_ID "unknown"
#endif

namespace protoseg::io {

std::string source_fingerprint() { return PROTOSEG_SOURCE_ID; }

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunManifest make_run_manifest(std::string command, std::vector<std::string> arguments, nlohmann::json config,
                              std::uint64_t seed) {
  RunManifest m;
  m.command = std::move(command);
  m.arguments = std::move(arguments);
  m.config = std::move(config);
  m.seed = seed;
  m.source = source_fingerprint();
  m.started_at = utc_timestamp();
  return m;
}

void write_run_manifest(const std::filesystem::path& path, const RunManifest& m) {
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["arguments"] = m.arguments;
  j["seed"] = m.seed;
  j["source"] = m.source;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  j["status"] = m.status;
  j["config"] = m.config;
  write_text_atomic(path, j.dump(2) + "\n");
}

}  // namespace protoseg::io
