// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

namespace uncurl {

/// Whole-file read; throws std::runtime_error naming the path on failure.
std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over `path`, creating parent
/// directories as needed. Readers never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace uncurl
