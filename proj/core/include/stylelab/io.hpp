#pragma once

#include <filesystem>
#include <string>

namespace stylelab {

/// Whole-file read; NotFoundError when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace stylelab
