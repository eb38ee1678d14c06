#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace synthpipe {

/// Reads a whole file, transparently gunzipping when the path ends in ".gz".
/// Throws UnreadableFile.
std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename, so readers never observe a
/// partial artifact. Gzip-compresses when the path ends in ".gz". Throws IoFailure.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Splits on '\n'; a trailing empty line is dropped, '\r' before '\n' is stripped.
std::vector<std::string_view> split_lines(std::string_view content);

bool has_gz_suffix(const std::filesystem::path& path);

}  // namespace synthpipe
