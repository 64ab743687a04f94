#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace badge {

/// Build version string.
std::string version();

/// Lowercase hex SHA-256 digest of `data`.
std::string sha256_hex(std::string_view data);

std::string_view trim(std::string_view s) noexcept;

std::vector<std::string> split_lines(std::string_view text);

/// Reads a whole file; throws Error(IoError) on failure.
std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Appends one line (a trailing '\n' is added) and flushes.
void append_line(const std::filesystem::path& path, std::string_view line);

/// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_timestamp();

/// True for a well-formed calendar date "YYYY-MM-DD".
bool is_iso_date(std::string_view s);

}  // namespace badge
