#pragma once
// Run manifests: every CLI command records its command line, resolved
// configuration, and seed next to its primary output so a run can be
// reproduced exactly.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vhtk/errors.hpp"
#include "vhtk/version.hpp"

namespace vhtk {

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_manifest(const std::string& path, const std::string& command,
                           const std::vector<std::string>& argv,
                           const nlohmann::ordered_json& resolved_config,
                           std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["tool"] = "vhtk";
  j["version"] = kVersion;
  j["command"] = command;
  j["argv"] = argv;
  j["seed"] = seed;
  j["config"] = resolved_config;
  j["timestamp_utc"] = utc_timestamp();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace vhtk
