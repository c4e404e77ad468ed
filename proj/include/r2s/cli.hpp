#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace r2s::cli {

/// Process exit codes.
enum ExitCode : int {
    kOk = 0,
    kUsage = 1,     // bad flags, bad identity, unwritable output
    kRejected = 2,  // a block failed verification
    kIo = 3,        // unreadable or malformed chain, manifest or key file
};

struct Hooks {
    /// Called by `append` after sealing and before the block is committed.
    std::function<void()> before_commit;
};

/// Runs one command line (without the program name). Machine-readable
/// results go to `out`; failures print "error: <token>: <detail>" to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const Hooks& hooks = {});

}  // namespace r2s::cli
