#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace retro::manifest {

// Reproducibility record written next to every command's outputs: the
// config snapshot plus content hashes of everything read and written.
struct RunManifest {
  std::string tool_version;
  std::string created_utc;
  std::string command;
  std::uint64_t master_seed = 0;
  nlohmann::json config_snapshot;
  std::map<std::string, std::string> input_hashes;  // path -> sha256
  std::map<std::string, std::string> output_hashes; // path -> sha256
};

RunManifest start_manifest(const std::string& command, std::uint64_t master_seed,
                           nlohmann::json config_snapshot);

void add_input(RunManifest& m, const std::filesystem::path& path);
void add_output(RunManifest& m, const std::filesystem::path& path);

std::string to_json(const RunManifest& m);
RunManifest from_json(std::string_view text);

// Writes <dir>/run_manifest.json.
void write(const RunManifest& m, const std::filesystem::path& dir);

} // namespace retro::manifest
