#ifndef MTOP_TOOLS_CLI_H_
#define MTOP_TOOLS_CLI_H_

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace mtop::cli {

enum ExitCode { kOk = 0, kUsage = 1, kDataError = 2, kBackendError = 3 };

// Runs one mtop invocation. Normal output goes to out, diagnostics to err.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Flat "key = value" lines; '#' starts a comment.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

std::string sha256_file(const std::filesystem::path& path);

}  // namespace mtop::cli

#endif  // MTOP_TOOLS_CLI_H_
