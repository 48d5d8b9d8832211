#pragma once

#include <string>

namespace hicolora::io {

std::string read_file(const std::string& path);
/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace hicolora::io
