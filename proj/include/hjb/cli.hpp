#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace hjb::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

/// Runs one subcommand. `args` excludes the program name. Results go to `out`
/// as JSON; diagnostics and usage text go to `err`.
///   0  success
///   1  domain or I/O error (failed solves, unreadable files)
///   2  usage error (unknown subcommand or flag, bad value)
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a file's bytes.
[[nodiscard]] std::string sha256_file(const std::filesystem::path& path);

/// Manifest path written next to an artifact: "<artifact>.manifest.json".
[[nodiscard]] std::filesystem::path manifest_path(const std::filesystem::path& artifact);

}  // namespace hjb::cli
