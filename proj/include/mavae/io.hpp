#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace mavae {

inline constexpr const char* kArtifactVersion = "1.0.0";

// "# key: value" lines written at the top of every CSV report.
using MetaHeader = std::vector<std::pair<std::string, std::string>>;

std::string render_meta(const MetaHeader& meta);

// Writes the whole file or throws IoError.
void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

}  // namespace mavae
