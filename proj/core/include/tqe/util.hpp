#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace tqe {

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

/// Level from TQE_LOG (error|info|debug), default info. Read once per process.
LogLevel log_level();
void log_error(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

/// Shortest decimal representation that round-trips exactly (std::to_chars).
std::string format_double(double v);

std::vector<std::string> split_on(std::string_view line, char sep);
/// Splits on runs of spaces, dropping empties.
std::vector<std::string> split_ws(std::string_view line);

std::string read_file(const std::filesystem::path& path);

}  // namespace tqe
