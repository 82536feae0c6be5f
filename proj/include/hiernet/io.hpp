#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace hiernet::io {

/// Writes `contents` to a sibling temp file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Throws DataError when the file is missing or unreadable.
std::string read_file(const std::filesystem::path& path);

}  // namespace hiernet::io
