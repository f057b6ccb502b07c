#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "meshspm/core.hpp"
#include "meshspm/version.hpp"

namespace meshspm {

// FNV-1a 64-bit content digest. Not cryptographic; it exists to catch
// accidental input drift between a manifest and a re-run.
inline std::uint64_t fnv1a64(const void* data, size_t size,
                             std::uint64_t h = 0xCBF29CE484222325ull) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

inline std::string digest_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

inline std::string digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::uint64_t h = 0xCBF29CE484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
  return digest_hex(h);
}

/// Reproducibility record written next to every command's outputs: the
/// resolved configuration, content digests of all inputs, and the produced
/// file inventory. Re-running the recorded configuration against inputs with
/// matching digests reproduces the outputs byte for byte.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::map<std::string, std::string> input_digests;
  std::map<std::string, std::string> output_digests;
  std::map<std::string, double> timings_ms;
  std::uint64_t seed = 0;
  std::string status = "ok";
  std::string error;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["tool"] = "meshspm";
    j["version"] = kVersion;
    j["command"] = command;
    j["config"] = config;
    j["inputs"] = input_digests;
    j["outputs"] = output_digests;
    j["timings_ms"] = timings_ms;
    j["seed"] = seed;
    j["status"] = status;
    if (!error.empty()) j["error"] = error;
    return j;
  }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << to_json().dump(2) << "\n";
    if (!out) throw IoError("write failure: " + path);
  }
};

class StageTimer {
 public:
  explicit StageTimer(RunManifest& manifest, std::string stage)
      : manifest_(manifest),
        stage_(std::move(stage)),
        start_(std::chrono::steady_clock::now()) {}

  ~StageTimer() {
    const auto elapsed = std::chrono::steady_clock::now() - start_;
    manifest_.timings_ms[stage_] =
        std::chrono::duration<double, std::milli>(elapsed).count();
  }

 private:
  RunManifest& manifest_;
  std::string stage_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace meshspm
