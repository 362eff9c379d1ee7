#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace canvas {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

// Write via a sibling temp file and rename, so readers never see a torn file.
void write_bytes_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);
void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& value);

nlohmann::json read_json(const std::filesystem::path& path);

// Lowercase, non-alphanumerics collapsed to single '-', trimmed.
std::string slugify(std::string_view text);

// UTC timestamp, ISO-8601 with seconds precision.
std::string utc_timestamp();

}  // namespace canvas
