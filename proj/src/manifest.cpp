#include "retro/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "retro/error.hpp"
#include "retro/hash.hpp"
#include "retro/version.hpp"

namespace retro::manifest {

using nlohmann::json;

namespace {

std::string utc_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace

RunManifest start_manifest(const std::string& command, std::uint64_t master_seed,
                           json config_snapshot) {
  RunManifest m;
  m.tool_version = kToolVersion;
  m.created_utc = utc_now();
  m.command = command;
  m.master_seed = master_seed;
  m.config_snapshot = std::move(config_snapshot);
  return m;
}

void add_input(RunManifest& m, const std::filesystem::path& path) {
  m.input_hashes[path.string()] = hash::sha256_file(path);
}

void add_output(RunManifest& m, const std::filesystem::path& path) {
  m.output_hashes[path.string()] = hash::sha256_file(path);
}

std::string to_json(const RunManifest& m) {
  json j;
  j["tool_version"] = m.tool_version;
  j["created_utc"] = m.created_utc;
  j["command"] = m.command;
  j["master_seed"] = m.master_seed;
  j["config"] = m.config_snapshot;
  j["inputs"] = m.input_hashes;
  j["outputs"] = m.output_hashes;
  return j.dump(2) + "\n";
}

RunManifest from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    raise(ErrorKind::parse, std::string("manifest JSON: ") + ex.what());
  }
  RunManifest m;
  m.tool_version = j.at("tool_version").get<std::string>();
  m.created_utc = j.at("created_utc").get<std::string>();
  m.command = j.value("command", std::string());
  m.master_seed = j.value("master_seed", 0ULL);
  m.config_snapshot = j.value("config", json());
  m.input_hashes = j.value("inputs", std::map<std::string, std::string>());
  m.output_hashes = j.value("outputs", std::map<std::string, std::string>());
  return m;
}

void write(const RunManifest& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "run_manifest.json", std::ios::binary);
  if (!out) raise(ErrorKind::io, "cannot write manifest in " + dir.string());
  out << to_json(m);
}

} // namespace retro::manifest
