#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace retro::hash {

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

// Digest of a file's raw bytes.
std::string sha256_file(const std::filesystem::path& path);

} // namespace retro::hash
