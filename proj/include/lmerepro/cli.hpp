#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lmerepro {

/// Exit status contract of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitDataError = 1, kExitNumerical = 2 };

/// Runs one subcommand. `args` excludes the program name. Results go to `out`
/// unless --out names a file, which is then replaced atomically.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Writes `content` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace lmerepro
