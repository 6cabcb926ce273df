#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ragqa::cli {

enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kUsage = 2,
    kBadInput = 3,  // missing file, bad config value
    kFingerprint = 4,
    kProvider = 5,
    kData = 6,  // corpus, dataset, retrieval, evaluation errors
    kStore = 7,
};

/// Runs one subcommand. Results go to `out`; failures are written to `err` as
/// a single JSON line {"error", "message", "exit_code"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ragqa::cli
