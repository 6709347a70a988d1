#pragma once

#include <filesystem>
#include <string>

namespace fairfed::detail {

/// Reads a whole file; throws Error("<what>: ...") naming the path.
std::string read_text_file(const std::filesystem::path& path, const char* what);

/// Writes (truncating), creating parent directories as needed.
void write_text_file(const std::filesystem::path& path, const std::string& text,
                     const char* what);

}  // namespace fairfed::detail
