#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include <json.hpp>

namespace slm {

std::string read_file(const std::filesystem::path& path);

/// Writes `bytes` to a sibling temporary file, flushes it, then renames it over
/// `path`. Readers observe either the previous or the new content. The hook,
/// when set, runs after the temporary is complete and before the rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes,
                       const std::function<void()>& before_rename = {});

nlohmann::json read_json(const std::filesystem::path& path);

/// Pretty-prints with two-space indent and a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& value);

/// Lowercase hex SHA-256 of a file's content.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace slm
