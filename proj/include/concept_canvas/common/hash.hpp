#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace canvas {

// Lowercase hex SHA-256 of a byte range.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

// Short content id used for image records: first 16 hex digits of SHA-256.
std::string content_id(std::span<const std::uint8_t> bytes);

}  // namespace canvas
