#pragma once

#include "krnet/config_io.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace krnet {

/// Process exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumeric = 3, kExitIo = 4 };

struct RunOptions {
  std::optional<std::uint64_t> seed;  ///< overrides the config "seed"
  int threads = 1;
  std::filesystem::path out = "out";
  std::ostream* log = nullptr;  ///< progress lines, none when null
};

/// Subcommands: estimate, solve-fp, sample, eval, grid. Runs one experiment,
/// writes its CSV and checkpoint outputs under `options.out` together with
/// manifest.json, and returns a JSON summary. Errors propagate as the
/// exception types of errors.hpp; the manifest records them.
Json run_command(const std::string& command, const Json& config, const RunOptions& options);

/// Exit code for the exception currently being handled.
int exit_code_for_current_exception(std::string& message);

const std::vector<std::string>& command_names();
std::string version_string();

Json read_json_file(const std::filesystem::path& path);
/// Header line then one row per matrix row, 17 significant digits.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header, const Matrix& rows);
/// Numeric CSV with one header line.
Matrix read_csv(const std::filesystem::path& path);

}  // namespace krnet
