#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace gst::cli {

/// Entry point of the command-line tool. Returns the process exit code; on
/// failure a one-line JSON error record goes to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// FNV-1a 64 of the bytes, as 16 lowercase hex digits.
std::string content_hash(const std::string& bytes);
std::string file_hash(const std::filesystem::path& path);

}  // namespace gst::cli
