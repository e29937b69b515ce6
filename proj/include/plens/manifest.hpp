#pragma once

// Run manifests: every artifact-producing command writes <artifact>.manifest.json
// recording the command, tool version, seed, effective config, and content
// hashes of inputs and outputs. Everything outside the "run" subobject is
// deterministic, so two manifests describe the same computation exactly when
// they agree outside "run".

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "plens/common.hpp"

namespace plens {

inline std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot hash missing file: " + path);
  char buf[1 << 16];
  std::uint64_t h = 0xcbf29ce484222325ull;
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::string> inputs;   // path -> content hash (hex)
  std::map<std::string, std::string> outputs;  // path -> content hash (hex)

  void add_input(const std::string& path) { inputs[path] = hex_u64(hash_file(path)); }
  void add_output(const std::string& path) { outputs[path] = hex_u64(hash_file(path)); }
};

namespace detail {

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

inline nlohmann::json manifest_json(const RunManifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["tool_version"] = kVersion;
  j["seed"] = m.seed;
  j["config"] = m.config;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["run"] = {{"timestamp", detail::utc_timestamp()}};  // non-semantic
  return j;
}

/// Writes <artifact>.manifest.json next to the artifact.
inline void write_manifest(const RunManifest& m, const std::string& artifact_path) {
  const std::string path = artifact_path + ".manifest.json";
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write manifest: " + path);
  out << manifest_json(m).dump(2) << "\n";
  if (!out) throw RuntimeFailure("write failure on manifest: " + path);
}

}  // namespace plens
