#pragma once

#include <string>

namespace flamekit {

/// Writes content to a sibling temp file, then renames over `path`.
/// Re-running a command can never leave a half-written output behind.
void write_file_atomic(const std::string& path, const std::string& content);

/// Whole-file read; throws IoError when the file cannot be opened.
std::string read_file(const std::string& path);

}  // namespace flamekit
